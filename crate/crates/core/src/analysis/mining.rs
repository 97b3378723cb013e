//! Cross-view failure modes.
//!
//! * low-diversity background: a real item whose object and full-image
//!   balls hold generated rows but whose background ball holds none;
//! * low-diversity object: a real item whose background ball holds
//!   generated rows but whose object and full-image balls hold none;
//! * low-realism background: a generated item whose background row lies in
//!   no real background ball.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result, RunEvaluation};
use crate::embedstore::View;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    LowDiversityBackground,
    LowDiversityObject,
    LowRealismBackground,
}

impl FailureMode {
    pub const ALL: [FailureMode; 3] = [
        FailureMode::LowDiversityBackground,
        FailureMode::LowDiversityObject,
        FailureMode::LowRealismBackground,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureMode::LowDiversityBackground => "low_diversity_background",
            FailureMode::LowDiversityObject => "low_diversity_object",
            FailureMode::LowRealismBackground => "low_realism_background",
        }
    }
}

impl std::str::FromStr for FailureMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FailureMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown failure mode {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Witness {
    Coverage {
        object: bool,
        full: bool,
        background: bool,
    },
    Realism {
        generated_item_id: String,
        containing_balls: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureModeHit {
    pub region: String,
    pub object_class: String,
    pub item_id: String,
    pub mode: FailureMode,
    pub witness: Witness,
}

/// Diversity predicate for one real item's covered flags.
pub fn classify_diversity(object: bool, full: bool, background: bool) -> Option<FailureMode> {
    match (object, full, background) {
        (true, true, false) => Some(FailureMode::LowDiversityBackground),
        (false, false, true) => Some(FailureMode::LowDiversityObject),
        _ => None,
    }
}

/// Realism predicate: the generated background row is in no real ball.
pub fn is_low_realism(containing_balls: u32) -> bool {
    containing_balls == 0
}

fn require_views(eval: &RunEvaluation, views: &[View]) -> Result<()> {
    for v in views {
        if !eval.report.config.views.contains(v) {
            return Err(AnalysisError::InvalidInput(format!(
                "mining needs the {v} view in the run"
            )));
        }
    }
    Ok(())
}

/// Every real item matching either diversity mode. Items without an object
/// row are never reported.
pub fn mine_low_diversity(eval: &RunEvaluation) -> Result<Vec<FailureModeHit>> {
    require_views(eval, &View::ALL)?;
    let mut hits = Vec::new();
    for bg_cell in eval.cells.iter().filter(|c| c.view == View::Background) {
        let covered_in = |view: View| -> HashMap<&str, bool> {
            eval.cell(&bg_cell.group, view)
                .map(|c| {
                    c.reference
                        .iter()
                        .enumerate()
                        .map(|(j, item)| (item.item_id.as_str(), c.summary.covered(j)))
                        .collect()
                })
                .unwrap_or_default()
        };
        let object = covered_in(View::Object);
        let full = covered_in(View::Full);
        for (j, item) in bg_cell.reference.iter().enumerate() {
            let (Some(&o), Some(&f)) = (object.get(item.item_id.as_str()), full.get(item.item_id.as_str()))
            else {
                continue;
            };
            let b = bg_cell.summary.covered(j);
            if let Some(mode) = classify_diversity(o, f, b) {
                hits.push(FailureModeHit {
                    region: item.region.clone(),
                    object_class: item.object_class.clone(),
                    item_id: item.item_id.clone(),
                    mode,
                    witness: Witness::Coverage {
                        object: o,
                        full: f,
                        background: b,
                    },
                });
            }
        }
    }
    hits.sort();
    Ok(hits)
}

/// Every generated item whose background row is outside the real
/// background manifold of its group.
pub fn mine_low_realism(eval: &RunEvaluation) -> Result<Vec<FailureModeHit>> {
    require_views(eval, &[View::Background])?;
    let mut hits = Vec::new();
    for cell in eval.cells.iter().filter(|c| c.view == View::Background) {
        for (i, item) in cell.generated.iter().enumerate() {
            let count = cell.summary.generated_counts[i];
            if is_low_realism(count) {
                hits.push(FailureModeHit {
                    region: item.region.clone(),
                    object_class: item.object_class.clone(),
                    item_id: item.item_id.clone(),
                    mode: FailureMode::LowRealismBackground,
                    witness: Witness::Realism {
                        generated_item_id: item.item_id.clone(),
                        containing_balls: count,
                    },
                });
            }
        }
    }
    hits.sort();
    Ok(hits)
}

/// Hits for the requested modes, sorted by (region, class, item, mode).
pub fn mine(eval: &RunEvaluation, modes: &[FailureMode]) -> Result<Vec<FailureModeHit>> {
    let mut hits = Vec::new();
    if modes.iter().any(|m| *m != FailureMode::LowRealismBackground) {
        hits.extend(
            mine_low_diversity(eval)?
                .into_iter()
                .filter(|h| modes.contains(&h.mode)),
        );
    }
    if modes.contains(&FailureMode::LowRealismBackground) {
        hits.extend(mine_low_realism(eval)?);
    }
    hits.sort();
    Ok(hits)
}

/// Up to `n` hits chosen uniformly by a seeded generator, kept in input
/// order.
pub fn sample_hits(hits: &[FailureModeHit], n: usize, seed: u64) -> Vec<FailureModeHit> {
    if n >= hits.len() {
        return hits.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, hits.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| hits[i].clone()).collect()
}
