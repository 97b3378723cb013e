use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result, RunReport};
use crate::embedstore::View;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    AvgPrecision,
    WorstPrecision,
    AvgCoverage,
    WorstCoverage,
}

impl Column {
    pub const ALL: [Column; 4] = [
        Column::AvgPrecision,
        Column::WorstPrecision,
        Column::AvgCoverage,
        Column::WorstCoverage,
    ];

    fn csv_name(self) -> &'static str {
        match self {
            Column::AvgPrecision => "avg_prec",
            Column::WorstPrecision => "worst_prec",
            Column::AvgCoverage => "avg_covg",
            Column::WorstCoverage => "worst_covg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnComparison {
    pub column: Column,
    pub original: f64,
    pub new: f64,
    /// `new - original`.
    pub delta: f64,
    /// `delta / original` in whole percent, rounded half away from zero.
    pub delta_percent: Option<i64>,
    /// Group that was worst in this column, for the worst-region columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_worst_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_worst_group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewComparison {
    pub view: View,
    pub columns: Vec<ColumnComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub original_run: String,
    pub new_run: String,
    pub original_template: String,
    pub new_template: String,
    pub views: Vec<ViewComparison>,
}

/// Object, background, then full image.
const VIEW_ORDER: [View; 3] = [View::Object, View::Background, View::Full];

fn column_value(report: &RunReport, view: View, column: Column) -> (f64, Option<String>) {
    let avg = report.average(view).expect("checked view");
    let worst = |metric: fn(&crate::manifold::MetricResult) -> f64| {
        // lowest value; ties go to the smallest group name
        report
            .view_cells(view)
            .map(|c| (metric(&c.metrics), c.group.clone()))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            .expect("checked view")
    };
    match column {
        Column::AvgPrecision => (avg.precision, None),
        Column::AvgCoverage => (avg.coverage, None),
        Column::WorstPrecision => {
            let (v, g) = worst(|m| m.precision);
            (v, Some(g))
        }
        Column::WorstCoverage => {
            let (v, g) = worst(|m| m.coverage);
            (v, Some(g))
        }
    }
}

fn percent(delta: f64, original: f64) -> Option<i64> {
    (original != 0.0).then(|| (delta / original * 100.0).round() as i64)
}

fn check_compatible(a: &RunReport, b: &RunReport) -> Result<()> {
    let mismatch = |what: &str| Err(AnalysisError::ConfigMismatch(what.to_owned()));
    if a.k != b.k {
        return mismatch(&format!("k differs ({} vs {})", a.k, b.k));
    }
    if a.config != b.config {
        return mismatch("report configs differ (metric, normalization, grouping, views or classes)");
    }
    let keys = |r: &RunReport| -> Vec<(String, View)> {
        r.cells.iter().map(|c| (c.group.clone(), c.view)).collect()
    };
    if keys(a) != keys(b) {
        return mismatch("reports cover different group/view cells");
    }
    Ok(())
}

pub fn compare_runs(original: &RunReport, new: &RunReport) -> Result<ComparisonTable> {
    check_compatible(original, new)?;
    let views = VIEW_ORDER
        .into_iter()
        .filter(|&v| original.average(v).is_some())
        .map(|view| ViewComparison {
            view,
            columns: Column::ALL
                .into_iter()
                .map(|column| {
                    let (o, og) = column_value(original, view, column);
                    let (n, ng) = column_value(new, view, column);
                    let delta = n - o;
                    ColumnComparison {
                        column,
                        original: o,
                        new: n,
                        delta,
                        delta_percent: percent(delta, o),
                        original_worst_group: og,
                        new_worst_group: ng,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(ComparisonTable {
        original_run: original.run_id.clone(),
        new_run: new.run_id.clone(),
        original_template: original.prompt_template.clone(),
        new_template: new.prompt_template.clone(),
        views,
    })
}

impl ComparisonTable {
    pub fn get(&self, view: View, column: Column) -> Option<&ColumnComparison> {
        self.views
            .iter()
            .find(|v| v.view == view)?
            .columns
            .iter()
            .find(|c| c.column == column)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Rows `Orig.`, `New`, `Delta`, `Delta (%)`; one column per view and
    /// metric. Values to three decimals, percents as whole numbers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for v in &self.views {
            for c in &v.columns {
                let _ = write!(out, ",{}_{}", v.view, c.column.csv_name());
            }
        }
        out.push('\n');
        type Cell = fn(&ColumnComparison) -> String;
        let rows: [(&str, Cell); 4] = [
            ("Orig.", |c| format!("{:.3}", c.original)),
            ("New", |c| format!("{:.3}", c.new)),
            ("Delta", |c| format!("{:.3}", c.delta)),
            ("Delta (%)", |c| {
                c.delta_percent
                    .map_or_else(|| "NA".to_owned(), |p| format!("{p}%"))
            }),
        ];
        for (label, cell) in rows {
            out.push_str(label);
            for v in &self.views {
                for c in &v.columns {
                    out.push(',');
                    out.push_str(&cell(c));
                }
            }
            out.push('\n');
        }
        out
    }
}
