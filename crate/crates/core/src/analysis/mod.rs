//! Per-group metric tables, disparity statistics, failure-mode mining and
//! run comparison.

mod compare;
mod disparity;
mod mining;
mod report;

use thiserror::Error;

use crate::embedstore::{StoreError, View};
use crate::manifold::ManifoldError;

pub use compare::{compare_runs, Column, ColumnComparison, ComparisonTable, ViewComparison};
pub use disparity::{disparity_stats, DisparityStats, MetricSpread, ViewDisparity};
pub use mining::{
    classify_diversity, is_low_realism, mine, mine_low_diversity, mine_low_realism, sample_hits,
    FailureMode, FailureModeHit, Witness,
};
pub use report::{
    compute_run, evaluate_run, CellEvaluation, CellReport, ItemRef, ReferenceCount, ReportConfig,
    RunEvaluation, RunOptions, RunReport, SkippedCell, ViewAverage,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{group}/{view}: {source}")]
    Cell {
        group: String,
        view: View,
        #[source]
        source: ManifoldError,
    },
    #[error("DimensionMismatch: real embeddings have dimension {real}, generated have {generated}")]
    DimensionMismatch { real: usize, generated: usize },
    #[error("RegionMissing: group {0:?} has generated items but no real items")]
    RegionMissing(String),
    #[error("SingleRegion: the {0} view has fewer than two computed groups")]
    SingleRegion(View),
    #[error("ConfigMismatch: {0}")]
    ConfigMismatch(String),
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

/// Unweighted mean, summed in the given order.
pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}
