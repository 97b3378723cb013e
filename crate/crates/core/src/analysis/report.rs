use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, AnalysisError, Result};
use crate::embedstore::{EmbeddingRecord, EmbeddingSet, GroupKey, Split, View};
use crate::manifold::{
    evaluate, ManifoldError, Manifold, MembershipSummary, MetricResult, Points, DEFAULT_K,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub run_id: String,
    pub prompt_template: String,
    pub k: usize,
    pub views: Vec<View>,
    pub group_by: GroupKey,
    /// Emit the number of generated rows inside every reference ball.
    pub reference_counts: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            run_id: "run".into(),
            prompt_template: String::new(),
            k: DEFAULT_K,
            views: View::ALL.to_vec(),
            group_by: GroupKey::Region,
            reference_counts: false,
        }
    }
}

/// Protocol settings two reports must share to be comparable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub distance_metric: String,
    pub normalization: String,
    pub boundary: String,
    pub group_by: GroupKey,
    pub views: Vec<View>,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCount {
    pub item_id: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub group: String,
    pub view: View,
    pub metrics: MetricResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_counts: Option<Vec<ReferenceCount>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub group: String,
    pub view: View,
    pub reason: String,
}

/// Unweighted mean over groups for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewAverage {
    pub view: View,
    pub precision: f64,
    pub coverage: f64,
    pub n_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub prompt_template: String,
    pub k: usize,
    pub config: ReportConfig,
    /// Sorted by (group, view).
    pub cells: Vec<CellReport>,
    pub averages: Vec<ViewAverage>,
    pub skipped: Vec<SkippedCell>,
}

impl RunReport {
    /// Assembles a report from finished cells, sorting them and deriving
    /// the per-view averages.
    pub fn from_cells(
        run_id: impl Into<String>,
        prompt_template: impl Into<String>,
        k: usize,
        config: ReportConfig,
        mut cells: Vec<CellReport>,
        skipped: Vec<SkippedCell>,
    ) -> Self {
        cells.sort_by(|a, b| (&a.group, a.view).cmp(&(&b.group, b.view)));
        let averages = config
            .views
            .iter()
            .filter_map(|&view| {
                let in_view: Vec<&CellReport> = cells.iter().filter(|c| c.view == view).collect();
                (!in_view.is_empty()).then(|| ViewAverage {
                    view,
                    precision: mean(in_view.iter().map(|c| c.metrics.precision)),
                    coverage: mean(in_view.iter().map(|c| c.metrics.coverage)),
                    n_groups: in_view.len(),
                })
            })
            .collect();
        RunReport {
            run_id: run_id.into(),
            prompt_template: prompt_template.into(),
            k,
            config,
            cells,
            averages,
            skipped,
        }
    }

    pub fn cell(&self, group: &str, view: View) -> Option<&MetricResult> {
        self.cells
            .iter()
            .find(|c| c.group == group && c.view == view)
            .map(|c| &c.metrics)
    }

    pub fn view_cells(&self, view: View) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(move |c| c.view == view)
    }

    pub fn average(&self, view: View) -> Option<&ViewAverage> {
        self.averages.iter().find(|a| a.view == view)
    }

    pub fn groups(&self) -> BTreeSet<&str> {
        self.cells
            .iter()
            .map(|c| c.group.as_str())
            .chain(self.skipped.iter().map(|s| s.group.as_str()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemRef {
    pub item_id: String,
    pub region: String,
    pub object_class: String,
}

impl From<&EmbeddingRecord> for ItemRef {
    fn from(r: &EmbeddingRecord) -> Self {
        ItemRef {
            item_id: r.item_id.clone(),
            region: r.region.clone(),
            object_class: r.object_class.clone(),
        }
    }
}

/// One computed cell with the per-row ball counts behind it.
#[derive(Debug, Clone)]
pub struct CellEvaluation {
    pub group: String,
    pub view: View,
    pub result: MetricResult,
    /// Aligned with `summary.reference_counts`.
    pub reference: Vec<ItemRef>,
    /// Aligned with `summary.generated_counts`.
    pub generated: Vec<ItemRef>,
    pub summary: MembershipSummary,
}

#[derive(Debug, Clone)]
pub struct RunEvaluation {
    pub report: RunReport,
    pub cells: Vec<CellEvaluation>,
}

impl RunEvaluation {
    pub fn cell(&self, group: &str, view: View) -> Option<&CellEvaluation> {
        self.cells.iter().find(|c| c.group == group && c.view == view)
    }
}

fn check_split(set: &EmbeddingSet, split: Split, name: &str) -> Result<()> {
    match set.records().iter().find(|r| r.split != split) {
        Some(r) => Err(AnalysisError::InvalidInput(format!(
            "{name} set contains item {:?} labelled {:?}",
            r.item_id, r.split
        ))),
        None => Ok(()),
    }
}

enum CellOutcome {
    Done(Box<CellEvaluation>),
    Skipped(SkippedCell),
}

/// Metrics for every (group, view) cell plus the membership counts needed
/// for mining.
pub fn evaluate_run(
    real: &EmbeddingSet,
    generated: &EmbeddingSet,
    opts: &RunOptions,
) -> Result<RunEvaluation> {
    if opts.k == 0 {
        return Err(AnalysisError::InvalidInput("k must be at least 1".into()));
    }
    if opts.views.is_empty() {
        return Err(AnalysisError::InvalidInput("no views requested".into()));
    }
    if real.dimension() != generated.dimension() {
        return Err(AnalysisError::DimensionMismatch {
            real: real.dimension(),
            generated: generated.dimension(),
        });
    }
    check_split(real, Split::Real, "real")?;
    check_split(generated, Split::Generated, "generated")?;

    let key = opts.group_by;
    let real_groups = real.groups(key);
    let gen_groups = generated.groups(key);
    if let Some(missing) = gen_groups.difference(&real_groups).next() {
        return Err(AnalysisError::RegionMissing(missing.clone()));
    }

    // Every generated item counts in every view's precision denominator.
    let mut items_per_group: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in generated.records() {
        items_per_group
            .entry(key.label(r))
            .or_default()
            .insert(r.item_id.as_str());
    }
    for view in [View::Full, View::Background] {
        if !opts.views.contains(&view) {
            continue;
        }
        let present: BTreeSet<&str> = generated
            .records()
            .iter()
            .filter(|r| r.view == view)
            .map(|r| r.item_id.as_str())
            .collect();
        if let Some(item) = generated.item_ids().into_iter().find(|i| !present.contains(i)) {
            return Err(AnalysisError::InvalidInput(format!(
                "generated item {item:?} has no {view} row"
            )));
        }
    }

    let mut views = opts.views.clone();
    views.sort();
    views.dedup();
    let jobs: Vec<(String, View)> = real_groups
        .iter()
        .flat_map(|g| views.iter().map(move |&v| (g.clone(), v)))
        .collect();

    let outcomes: Vec<Result<CellOutcome>> = jobs
        .par_iter()
        .map(|(group, view)| {
            let n_total = items_per_group.get(group.as_str()).map_or(0, BTreeSet::len);
            evaluate_cell(real, generated, key, group, *view, opts.k, n_total)
        })
        .collect();

    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome? {
            CellOutcome::Done(c) => cells.push(*c),
            CellOutcome::Skipped(s) => skipped.push(s),
        }
    }

    let mut classes: Vec<String> = real.object_classes().into_iter().collect();
    classes.extend(generated.object_classes());
    classes.sort();
    classes.dedup();

    let config = ReportConfig {
        distance_metric: "euclidean".into(),
        normalization: "none".into(),
        boundary: "inclusive".into(),
        group_by: key,
        views,
        classes,
    };
    let cell_reports = cells
        .iter()
        .map(|c| CellReport {
            group: c.group.clone(),
            view: c.view,
            metrics: c.result,
            reference_counts: opts.reference_counts.then(|| {
                c.reference
                    .iter()
                    .zip(&c.summary.reference_counts)
                    .map(|(item, &count)| ReferenceCount {
                        item_id: item.item_id.clone(),
                        count,
                    })
                    .collect()
            }),
        })
        .collect();
    let report = RunReport::from_cells(
        opts.run_id.clone(),
        opts.prompt_template.clone(),
        opts.k,
        config,
        cell_reports,
        skipped,
    );
    Ok(RunEvaluation { report, cells })
}

fn evaluate_cell(
    real: &EmbeddingSet,
    generated: &EmbeddingSet,
    key: GroupKey,
    group: &str,
    view: View,
    k: usize,
    n_total: usize,
) -> Result<CellOutcome> {
    let in_cell = |r: &EmbeddingRecord| r.view == view && key.label(r) == group;
    let collect = |set: &EmbeddingSet| {
        let mut refs = Vec::new();
        let mut data = Vec::new();
        for (record, row) in set.rows().filter(|(r, _)| in_cell(r)) {
            refs.push(ItemRef::from(record));
            data.extend_from_slice(row);
        }
        (refs, Points::from_f32(set.dimension(), &data))
    };
    let (reference, real_points) = collect(real);
    let (gen_refs, gen_points) = collect(generated);
    let skip = |reason: String| {
        Ok(CellOutcome::Skipped(SkippedCell {
            group: group.to_owned(),
            view,
            reason,
        }))
    };
    if n_total == 0 {
        return skip(ManifoldError::ZeroDenominator("no generated items").to_string());
    }
    let manifold = match Manifold::from_points(real_points, k, Vec::new()) {
        Ok(m) => m,
        Err(e @ ManifoldError::TooFewPoints { .. }) => return skip(e.to_string()),
        Err(source) => {
            return Err(AnalysisError::Cell {
                group: group.to_owned(),
                view,
                source,
            })
        }
    };
    let (result, summary) =
        evaluate(&manifold, &gen_points, n_total).map_err(|source| AnalysisError::Cell {
            group: group.to_owned(),
            view,
            source,
        })?;
    Ok(CellOutcome::Done(Box::new(CellEvaluation {
        group: group.to_owned(),
        view,
        result,
        reference,
        generated: gen_refs,
        summary,
    })))
}

pub fn compute_run(
    real: &EmbeddingSet,
    generated: &EmbeddingSet,
    opts: &RunOptions,
) -> Result<RunReport> {
    evaluate_run(real, generated, opts).map(|e| e.report)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// Report with one cell per `(group, view, precision, coverage)`; values
    /// must be multiples of 1/1000.
    pub(crate) fn report_with(cells: &[(&str, View, f64, f64)]) -> RunReport {
        let mut views: Vec<View> = cells.iter().map(|c| c.1).collect();
        views.sort();
        views.dedup();
        let config = ReportConfig {
            distance_metric: "euclidean".into(),
            normalization: "none".into(),
            boundary: "inclusive".into(),
            group_by: GroupKey::Region,
            views,
            classes: vec!["pot".into()],
        };
        let cells = cells
            .iter()
            .map(|&(group, view, p, c)| CellReport {
                group: group.into(),
                view,
                metrics: MetricResult::from_counts(
                    (p * 1000.0).round() as usize,
                    1000,
                    1000,
                    (c * 1000.0).round() as usize,
                    1000,
                )
                .unwrap(),
                reference_counts: None,
            })
            .collect();
        RunReport::from_cells("test", "{object} in {region}", 3, config, cells, vec![])
    }
}
