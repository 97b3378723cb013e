//! Exhaustive reference computation of the manifold metrics.
//!
//! No tiling, no parallelism, no partial selection: every distance is
//! enumerated and every neighbor list fully sorted. Shares no code with the
//! blocked engine; it reproduces only the documented accumulation order
//! (f64, lane `e % 8`, fixed lane reduction) so results compare exactly.

use super::{ManifoldError, Result};

/// Euclidean distance between two f32 rows.
pub fn distance(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 8];
    for e in 0..a.len() {
        let d = f64::from(a[e]) - f64::from(b[e]);
        lanes[e % 8] += d * d;
    }
    let sum = ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6]))
        + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]));
    sum.sqrt()
}

fn rows(data: &[f32], dim: usize) -> Vec<&[f32]> {
    data.chunks(dim).collect()
}

/// k-th nearest other-row distance for every row of `reference`.
pub fn radii(reference: &[f32], dim: usize, k: usize) -> Vec<f64> {
    let refs = rows(reference, dim);
    refs.iter()
        .enumerate()
        .map(|(j, r)| {
            let mut ds: Vec<f64> = refs
                .iter()
                .enumerate()
                .filter(|(l, _)| *l != j)
                .map(|(_, o)| distance(r, o))
                .collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        })
        .collect()
}

/// Everything the oracle derives for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub radii: Vec<f64>,
    /// `membership[j][i]`: generated row `i` lies in reference ball `j`.
    pub membership: Vec<Vec<bool>>,
    pub n_inside: usize,
    pub n_covered: usize,
    pub precision: f64,
    pub coverage: f64,
}

pub fn evaluate(
    reference: &[f32],
    generated: &[f32],
    dim: usize,
    k: usize,
    n_generated_total: usize,
) -> Result<OracleOutcome> {
    if k == 0 {
        return Err(ManifoldError::InvalidK);
    }
    let n_ref = reference.len() / dim;
    let n_gen = generated.len() / dim;
    if n_ref <= k {
        return Err(ManifoldError::TooFewPoints { rows: n_ref, k });
    }
    if n_generated_total == 0 {
        return Err(ManifoldError::ZeroDenominator("no generated items"));
    }
    if n_generated_total < n_gen {
        return Err(ManifoldError::InvalidTotal {
            total: n_generated_total,
            embedded: n_gen,
        });
    }
    let radii = radii(reference, dim, k);
    let refs = rows(reference, dim);
    let gens = rows(generated, dim);
    let membership: Vec<Vec<bool>> = refs
        .iter()
        .zip(&radii)
        .map(|(r, &radius)| gens.iter().map(|g| distance(g, r) <= radius).collect())
        .collect();

    let mut n_inside = 0;
    for i in 0..n_gen {
        let mut inside = false;
        for row in &membership {
            if row[i] {
                inside = true;
            }
        }
        if inside {
            n_inside += 1;
        }
    }
    let mut n_covered = 0;
    for row in &membership {
        if row.contains(&true) {
            n_covered += 1;
        }
    }
    Ok(OracleOutcome {
        radii,
        membership,
        n_inside,
        n_covered,
        precision: n_inside as f64 / n_generated_total as f64,
        coverage: n_covered as f64 / n_ref as f64,
    })
}

/// `(precision, coverage)` by exhaustive enumeration.
pub fn brute_force_oracle(
    reference: &[f32],
    generated: &[f32],
    dim: usize,
    k: usize,
    n_generated_total: usize,
) -> Result<(f64, f64)> {
    let o = evaluate(reference, generated, dim, k, n_generated_total)?;
    Ok((o.precision, o.coverage))
}
