use serde::{Deserialize, Serialize};

use super::{mean, AnalysisError, Result, RunReport};
use crate::embedstore::View;

/// Best and worst group for one metric in one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpread {
    pub worst_group: String,
    pub best_group: String,
    pub worst_value: f64,
    pub best_value: f64,
    pub mean: f64,
    /// `best - worst`.
    pub span: f64,
    /// `best / worst`; absent when the worst value is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDisparity {
    pub view: View,
    pub precision: MetricSpread,
    pub coverage: MetricSpread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityStats {
    pub views: Vec<ViewDisparity>,
}

impl DisparityStats {
    pub fn view(&self, view: View) -> Option<&ViewDisparity> {
        self.views.iter().find(|v| v.view == view)
    }
}

/// Ties resolve to the lexicographically smallest group name, for both
/// best and worst.
fn spread<'a>(values: impl Iterator<Item = (&'a str, f64)> + Clone) -> MetricSpread {
    let mut worst: Option<(&str, f64)> = None;
    let mut best: Option<(&str, f64)> = None;
    for (g, v) in values.clone() {
        if worst.is_none_or(|(wg, wv)| v < wv || (v == wv && g < wg)) {
            worst = Some((g, v));
        }
        if best.is_none_or(|(bg, bv)| v > bv || (v == bv && g < bg)) {
            best = Some((g, v));
        }
    }
    let (worst_group, worst_value) = worst.expect("non-empty");
    let (best_group, best_value) = best.expect("non-empty");
    MetricSpread {
        worst_group: worst_group.to_owned(),
        best_group: best_group.to_owned(),
        worst_value,
        best_value,
        mean: mean(values.map(|(_, v)| v)),
        span: best_value - worst_value,
        ratio: (worst_value > 0.0).then(|| best_value / worst_value),
    }
}

pub fn disparity_stats(report: &RunReport) -> Result<DisparityStats> {
    let mut views = Vec::new();
    for &view in &report.config.views {
        let cells: Vec<_> = report.view_cells(view).collect();
        if cells.is_empty() {
            continue;
        }
        if cells.len() < 2 {
            return Err(AnalysisError::SingleRegion(view));
        }
        views.push(ViewDisparity {
            view,
            precision: spread(cells.iter().map(|c| (c.group.as_str(), c.metrics.precision))),
            coverage: spread(cells.iter().map(|c| (c.group.as_str(), c.metrics.coverage))),
        });
    }
    if views.is_empty() {
        return Err(AnalysisError::InvalidInput("report has no computed cells".into()));
    }
    Ok(DisparityStats { views })
}
