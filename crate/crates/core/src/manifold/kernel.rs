//! Blocked exact Euclidean distances.
//!
//! Every distance is accumulated in f64 over eight interleaved lanes
//! (element `e` goes to lane `e % 8`) and the lanes are reduced in a fixed
//! tree. The order never depends on tiling, block size or instruction set,
//! so any two pairs with the same coordinates get bit-identical distances.

/// Interleaved accumulator lanes.
pub const LANES: usize = 8;

/// Rows per tile side. Tiles are the unit of both parallel work and
/// memory: at most one `TILE x TILE` block of distances per worker.
pub const TILE: usize = 48;

/// Row-major f64 copy of a set of f32 vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn from_f32(dim: usize, data: &[f32]) -> Self {
        assert!(dim > 0, "dimension must be positive");
        assert_eq!(data.len() % dim, 0, "ragged rows");
        Points {
            data: data.iter().map(|&v| f64::from(v)).collect(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows `range` as one contiguous slice.
    pub fn block(&self, range: std::ops::Range<usize>) -> &[f64] {
        &self.data[range.start * self.dim..range.end * self.dim]
    }
}

#[inline(always)]
fn reduce_lanes(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

#[inline(always)]
fn accumulate<const N: usize>(a: &[f64], bs: [&[f64]; N], acc: &mut [[f64; LANES]; N]) {
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        let x: &[f64; LANES] = a[base..base + LANES].try_into().unwrap();
        for (b, acc) in bs.iter().zip(acc.iter_mut()) {
            let y: &[f64; LANES] = b[base..base + LANES].try_into().unwrap();
            for l in 0..LANES {
                let d = x[l] - y[l];
                acc[l] += d * d;
            }
        }
    }
    let base = chunks * LANES;
    for (l, e) in (base..a.len()).enumerate() {
        for (b, acc) in bs.iter().zip(acc.iter_mut()) {
            let d = a[e] - b[e];
            acc[l] += d * d;
        }
    }
}

#[inline(always)]
fn tile_body(a: &[f64], b: &[f64], dim: usize, out: &mut [f64]) {
    let nb = b.len() / dim;
    for (i, x) in a.chunks_exact(dim).enumerate() {
        let row = &mut out[i * nb..(i + 1) * nb];
        let mut j = 0;
        while j + 4 <= nb {
            let mut acc = [[0.0; LANES]; 4];
            accumulate(
                x,
                [
                    &b[j * dim..(j + 1) * dim],
                    &b[(j + 1) * dim..(j + 2) * dim],
                    &b[(j + 2) * dim..(j + 3) * dim],
                    &b[(j + 3) * dim..(j + 4) * dim],
                ],
                &mut acc,
            );
            for t in 0..4 {
                row[j + t] = reduce_lanes(&acc[t]).sqrt();
            }
            j += 4;
        }
        while j < nb {
            let mut acc = [[0.0; LANES]; 1];
            accumulate(x, [&b[j * dim..(j + 1) * dim]], &mut acc);
            row[j] = reduce_lanes(&acc[0]).sqrt();
            j += 1;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn tile_avx512(a: &[f64], b: &[f64], dim: usize, out: &mut [f64]) {
    tile_body(a, b, dim, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tile_avx2(a: &[f64], b: &[f64], dim: usize, out: &mut [f64]) {
    tile_body(a, b, dim, out)
}

fn tile_portable(a: &[f64], b: &[f64], dim: usize, out: &mut [f64]) {
    tile_body(a, b, dim, out)
}

type TileFn = fn(&[f64], &[f64], usize, &mut [f64]);

fn select_tile_fn() -> TileFn {
    #[cfg(target_arch = "x86_64")]
    {
        // Only wider registers are enabled, never FMA: the rounding
        // sequence is identical on every path.
        if std::is_x86_feature_detected!("avx512f") {
            return |a, b, d, o| unsafe { tile_avx512(a, b, d, o) };
        }
        if std::is_x86_feature_detected!("avx2") {
            return |a, b, d, o| unsafe { tile_avx2(a, b, d, o) };
        }
    }
    tile_portable
}

/// Distances between every row of `a` and every row of `b`, written
/// row-major into `out` (`a rows x b rows`).
pub fn distance_tile(a: &[f64], b: &[f64], dim: usize, out: &mut [f64]) {
    static TILE_FN: std::sync::OnceLock<TileFn> = std::sync::OnceLock::new();
    assert_eq!(out.len(), (a.len() / dim) * (b.len() / dim));
    (TILE_FN.get_or_init(select_tile_fn))(a, b, dim, out)
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut out = [0.0];
    tile_portable(a, b, a.len(), &mut out);
    out[0]
}

/// Tile index ranges covering `0..n`.
pub fn tiles(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(TILE))
        .map(|t| t * TILE..((t + 1) * TILE).min(n))
        .collect()
}
