//! k-NN manifolds over reference embeddings, with precision (realism) and
//! coverage (diversity) of a generated set measured against them.
//!
//! Each reference row `j` owns a closed ball whose radius is the Euclidean
//! distance to its k-th nearest *other* reference row. A generated row is
//! "inside" when it lies in at least one ball; a reference row is "covered"
//! when its ball holds at least one generated row. Balls are closed, so a
//! generated row exactly on a boundary counts.

pub mod kernel;
pub mod oracle;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedstore::EmbeddingSet;
pub use kernel::Points;
use kernel::{distance_tile, tiles};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifoldError {
    #[error("TooFewPoints: {rows} reference rows cannot define a k={k} manifold")]
    TooFewPoints { rows: usize, k: usize },
    #[error("InvalidK: k must be at least 1")]
    InvalidK,
    #[error("DimensionMismatch: reference has dimension {expected}, generated has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("ZeroDenominator: {0}")]
    ZeroDenominator(&'static str),
    #[error("InvalidTotal: {total} generated items but {embedded} embedded rows")]
    InvalidTotal { total: usize, embedded: usize },
}

pub type Result<T, E = ManifoldError> = std::result::Result<T, E>;

/// Reference rows plus the k-NN radius of each.
#[derive(Debug, Clone)]
pub struct Manifold {
    points: Points,
    radii: Vec<f64>,
    k: usize,
    ids: Vec<String>,
}

impl Manifold {
    /// Builds from raw rows. `ids` may be empty.
    pub fn from_rows(dim: usize, rows: &[f32], k: usize) -> Result<Self> {
        Self::from_points(Points::from_f32(dim, rows), k, Vec::new())
    }

    pub fn from_points(points: Points, k: usize, ids: Vec<String>) -> Result<Self> {
        if k == 0 {
            return Err(ManifoldError::InvalidK);
        }
        if points.len() <= k {
            return Err(ManifoldError::TooFewPoints {
                rows: points.len(),
                k,
            });
        }
        let radii = knn_radii(&points, k);
        Ok(Manifold {
            points,
            radii,
            k,
            ids,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    /// Item ids of the reference rows (empty when built from raw rows).
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn check_dim(&self, generated: &Points) -> Result<()> {
        if !generated.is_empty() && generated.dim() != self.dim() {
            return Err(ManifoldError::DimensionMismatch {
                expected: self.dim(),
                found: generated.dim(),
            });
        }
        Ok(())
    }

    /// Ball counts in both directions, without materializing the
    /// reference x generated matrix.
    pub fn summarize(&self, generated: &Points) -> Result<MembershipSummary> {
        self.check_dim(generated)?;
        let n_gen = generated.len();
        let dim = self.dim();
        let ref_tiles = tiles(self.len());
        let gen_tiles = tiles(n_gen);

        struct Acc {
            generated: Vec<u32>,
            reference: Vec<(usize, Vec<u32>)>,
            buf: Vec<f64>,
        }
        let acc = ref_tiles
            .par_iter()
            .enumerate()
            .fold(
                || Acc {
                    generated: vec![0; n_gen],
                    reference: Vec::new(),
                    buf: Vec::new(),
                },
                |mut acc, (t, rr)| {
                    let mut counts = vec![0u32; rr.len()];
                    for gr in &gen_tiles {
                        acc.buf.resize(rr.len() * gr.len(), 0.0);
                        distance_tile(
                            self.points.block(rr.clone()),
                            generated.block(gr.clone()),
                            dim,
                            &mut acc.buf,
                        );
                        for (a, j) in rr.clone().enumerate() {
                            let radius = self.radii[j];
                            let row = &acc.buf[a * gr.len()..(a + 1) * gr.len()];
                            for (b, &d) in row.iter().enumerate() {
                                if d <= radius {
                                    counts[a] += 1;
                                    acc.generated[gr.start + b] += 1;
                                }
                            }
                        }
                    }
                    acc.reference.push((t, counts));
                    acc
                },
            )
            .reduce_with(|mut a, b| {
                for (x, y) in a.generated.iter_mut().zip(&b.generated) {
                    *x += y;
                }
                a.reference.extend(b.reference);
                a
            });

        let (generated_counts, mut parts) = match acc {
            Some(acc) => (acc.generated, acc.reference),
            None => (vec![0; n_gen], Vec::new()),
        };
        parts.sort_unstable_by_key(|(t, _)| *t);
        let reference_counts = parts.into_iter().flat_map(|(_, c)| c).collect();
        Ok(MembershipSummary {
            reference_counts,
            generated_counts,
        })
    }

    pub fn membership(&self, generated: &Points) -> Result<MembershipMatrix> {
        self.check_dim(generated)?;
        let n_gen = generated.len();
        let dim = self.dim();
        let gen_tiles = tiles(n_gen);
        let rows: Vec<Vec<bool>> = tiles(self.len())
            .into_par_iter()
            .flat_map_iter(|rr| {
                let mut out = vec![vec![false; n_gen]; rr.len()];
                let mut buf = Vec::new();
                for gr in &gen_tiles {
                    buf.resize(rr.len() * gr.len(), 0.0);
                    distance_tile(
                        self.points.block(rr.clone()),
                        generated.block(gr.clone()),
                        dim,
                        &mut buf,
                    );
                    for (a, j) in rr.clone().enumerate() {
                        for b in 0..gr.len() {
                            out[a][gr.start + b] = buf[a * gr.len() + b] <= self.radii[j];
                        }
                    }
                }
                out
            })
            .collect();
        Ok(MembershipMatrix {
            entries: rows,
            n_generated: n_gen,
            reference_ids: self.ids.clone(),
            generated_ids: Vec::new(),
        })
    }
}

/// k-th smallest distance from each row to the other rows. Each unordered
/// pair is computed once.
fn knn_radii(points: &Points, k: usize) -> Vec<f64> {
    let n = points.len();
    let dim = points.dim();
    let row_tiles = tiles(n);
    let table = (0..row_tiles.len())
        .into_par_iter()
        .fold(
            || (KSmallest::new(n, k), Vec::new()),
            |(mut table, mut buf), ti| {
                let ri = &row_tiles[ti];
                for rj in &row_tiles[ti..] {
                    buf.resize(ri.len() * rj.len(), 0.0);
                    distance_tile(points.block(ri.clone()), points.block(rj.clone()), dim, &mut buf);
                    let diagonal = ri == rj;
                    for (a, i) in ri.clone().enumerate() {
                        for (b, j) in rj.clone().enumerate() {
                            if i == j {
                                continue;
                            }
                            let d = buf[a * rj.len() + b];
                            table.push(i, d);
                            if !diagonal {
                                table.push(j, d);
                            }
                        }
                    }
                }
                (table, buf)
            },
        )
        .map(|(table, _)| table)
        .reduce_with(|mut a, b| {
            a.merge(&b);
            a
        })
        .expect("at least one tile");
    (0..n).map(|i| table.kth(i)).collect()
}

/// The `k` smallest values pushed for each row, as a multiset.
struct KSmallest {
    k: usize,
    values: Vec<f64>,
}

impl KSmallest {
    fn new(n: usize, k: usize) -> Self {
        KSmallest {
            k,
            values: vec![f64::INFINITY; n * k],
        }
    }

    #[inline]
    fn push(&mut self, row: usize, d: f64) {
        let slot = &mut self.values[row * self.k..(row + 1) * self.k];
        if d >= slot[self.k - 1] {
            return;
        }
        let mut p = self.k - 1;
        while p > 0 && slot[p - 1] > d {
            slot[p] = slot[p - 1];
            p -= 1;
        }
        slot[p] = d;
    }

    fn merge(&mut self, other: &KSmallest) {
        for row in 0..self.values.len() / self.k {
            for &d in &other.values[row * self.k..(row + 1) * self.k] {
                if d == f64::INFINITY {
                    break;
                }
                self.push(row, d);
            }
        }
    }

    fn kth(&self, row: usize) -> f64 {
        self.values[(row + 1) * self.k - 1]
    }
}

/// Per-row ball counts for one manifold / generated pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MembershipSummary {
    /// For each reference row, how many generated rows fall in its ball.
    pub reference_counts: Vec<u32>,
    /// For each generated row, how many reference balls contain it.
    pub generated_counts: Vec<u32>,
}

impl MembershipSummary {
    pub fn inside(&self, generated_row: usize) -> bool {
        self.generated_counts[generated_row] > 0
    }

    pub fn covered(&self, reference_row: usize) -> bool {
        self.reference_counts[reference_row] > 0
    }

    pub fn n_inside(&self) -> usize {
        self.generated_counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn n_covered(&self) -> usize {
        self.reference_counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Dense ball-membership indicator, `entries[j][i]` for reference row `j`
/// and generated row `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipMatrix {
    pub entries: Vec<Vec<bool>>,
    pub n_generated: usize,
    pub reference_ids: Vec<String>,
    pub generated_ids: Vec<String>,
}

impl MembershipMatrix {
    pub fn get(&self, reference: usize, generated: usize) -> bool {
        self.entries[reference][generated]
    }

    /// Any reference ball contains generated row `i`.
    pub fn generated_inside(&self) -> Vec<bool> {
        (0..self.n_generated)
            .map(|i| self.entries.iter().any(|row| row[i]))
            .collect()
    }

    /// Reference ball `j` contains any generated row.
    pub fn reference_covered(&self) -> Vec<bool> {
        self.entries.iter().map(|row| row.iter().any(|&b| b)).collect()
    }
}

/// Precision and coverage for one (group, view) cell, with the integer
/// counts behind each ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub precision: f64,
    pub coverage: f64,
    /// Precision denominator; includes generated items that have no row in
    /// this view.
    pub n_generated_total: usize,
    pub n_generated_embedded: usize,
    pub n_real: usize,
    pub n_inside: usize,
    pub n_covered: usize,
}

impl MetricResult {
    pub fn from_counts(
        n_inside: usize,
        n_generated_total: usize,
        n_generated_embedded: usize,
        n_covered: usize,
        n_real: usize,
    ) -> Result<Self> {
        if n_generated_total == 0 {
            return Err(ManifoldError::ZeroDenominator("no generated items"));
        }
        if n_real == 0 {
            return Err(ManifoldError::ZeroDenominator("no reference rows"));
        }
        if n_generated_total < n_generated_embedded {
            return Err(ManifoldError::InvalidTotal {
                total: n_generated_total,
                embedded: n_generated_embedded,
            });
        }
        Ok(MetricResult {
            precision: ratio(n_inside, n_generated_total),
            coverage: ratio(n_covered, n_real),
            n_generated_total,
            n_generated_embedded,
            n_real,
            n_inside,
            n_covered,
        })
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    num as f64 / den as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precision {
    pub value: f64,
    pub n_inside: usize,
    pub n_generated_total: usize,
    pub n_generated_embedded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub value: f64,
    pub n_covered: usize,
    pub n_real: usize,
}

fn set_points(set: &EmbeddingSet) -> Points {
    Points::from_f32(set.dimension(), set.vectors())
}

fn set_ids(set: &EmbeddingSet) -> Vec<String> {
    set.records().iter().map(|r| r.item_id.clone()).collect()
}

pub fn build_manifold(reference: &EmbeddingSet, k: usize) -> Result<Manifold> {
    Manifold::from_points(set_points(reference), k, set_ids(reference))
}

fn check_set_dim(manifold: &Manifold, generated: &EmbeddingSet) -> Result<()> {
    if generated.dimension() != manifold.dim() {
        return Err(ManifoldError::DimensionMismatch {
            expected: manifold.dim(),
            found: generated.dimension(),
        });
    }
    Ok(())
}

pub fn membership(manifold: &Manifold, generated: &EmbeddingSet) -> Result<MembershipMatrix> {
    check_set_dim(manifold, generated)?;
    let mut m = manifold.membership(&set_points(generated))?;
    m.generated_ids = set_ids(generated);
    Ok(m)
}

/// Fraction of `n_generated_total` items whose row lies in the manifold.
/// Items beyond the embedded rows count as outside.
pub fn precision(
    manifold: &Manifold,
    generated: &EmbeddingSet,
    n_generated_total: usize,
) -> Result<Precision> {
    check_set_dim(manifold, generated)?;
    if n_generated_total == 0 {
        return Err(ManifoldError::ZeroDenominator("no generated items"));
    }
    if n_generated_total < generated.len() {
        return Err(ManifoldError::InvalidTotal {
            total: n_generated_total,
            embedded: generated.len(),
        });
    }
    let n_inside = manifold.summarize(&set_points(generated))?.n_inside();
    Ok(Precision {
        value: ratio(n_inside, n_generated_total),
        n_inside,
        n_generated_total,
        n_generated_embedded: generated.len(),
    })
}

pub fn coverage(manifold: &Manifold, generated: &EmbeddingSet) -> Result<Coverage> {
    check_set_dim(manifold, generated)?;
    if manifold.is_empty() {
        return Err(ManifoldError::ZeroDenominator("no reference rows"));
    }
    let n_covered = manifold.summarize(&set_points(generated))?.n_covered();
    Ok(Coverage {
        value: ratio(n_covered, manifold.len()),
        n_covered,
        n_real: manifold.len(),
    })
}

/// Precision and coverage from one pass over the distances.
pub fn evaluate(
    manifold: &Manifold,
    generated: &Points,
    n_generated_total: usize,
) -> Result<(MetricResult, MembershipSummary)> {
    let summary = manifold.summarize(generated)?;
    let result = MetricResult::from_counts(
        summary.n_inside(),
        n_generated_total,
        generated.len(),
        summary.n_covered(),
        manifold.len(),
    )?;
    Ok((result, summary))
}
