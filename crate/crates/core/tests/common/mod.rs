#![allow(dead_code)]

use ddig_core::embedstore::{EmbeddingRecord, EmbeddingSet, Split, View};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Continuous rows, or small-integer lattice rows that produce many exact
/// ties and duplicates.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize, lattice: bool) -> Vec<f32> {
    (0..n * dim)
        .map(|_| {
            if lattice {
                rng.random_range(-3i32..=3) as f32
            } else {
                rng.random_range(-10.0f32..10.0)
            }
        })
        .collect()
}

/// Multiples of 1/8 in [-8, 8]: scaling by powers of two and translating by
/// other multiples of 1/8 are exact in f32.
pub fn dyadic_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f32> {
    (0..n * dim)
        .map(|_| rng.random_range(-64i32..=64) as f32 / 8.0)
        .collect()
}

pub struct ItemSpec<'a> {
    pub item_id: String,
    pub region: &'a str,
    pub object_class: &'a str,
    /// `None` for items without an object segmentation.
    pub object: Option<Vec<f32>>,
    pub full: Vec<f32>,
    pub background: Vec<f32>,
}

/// A file-valid set: per view, row indexes follow item order.
pub fn build_set(split: Split, dim: usize, items: &[ItemSpec]) -> EmbeddingSet {
    let mut records = Vec::new();
    let mut vectors = Vec::new();
    let mut next = [0usize; 3];
    for item in items {
        let views = [
            (View::Full, Some(&item.full)),
            (View::Object, item.object.as_ref()),
            (View::Background, Some(&item.background)),
        ];
        for (view, row) in views {
            let Some(row) = row else { continue };
            assert_eq!(row.len(), dim);
            records.push(EmbeddingRecord {
                item_id: item.item_id.clone(),
                split,
                region: item.region.into(),
                object_class: item.object_class.into(),
                view,
                row_index: next[view as usize],
                has_object_segmentation: item.object.is_some(),
            });
            next[view as usize] += 1;
            vectors.extend_from_slice(row);
        }
    }
    EmbeddingSet::new(dim, vectors, records).expect("valid set")
}

/// Items whose three views share one vector.
pub fn uniform_items<'a>(
    prefix: &str,
    region: &'a str,
    rows: &[f32],
    dim: usize,
) -> Vec<ItemSpec<'a>> {
    rows.chunks(dim)
        .enumerate()
        .map(|(i, r)| ItemSpec {
            item_id: format!("{prefix}{i:04}"),
            region,
            object_class: "pot",
            object: Some(r.to_vec()),
            full: r.to_vec(),
            background: r.to_vec(),
        })
        .collect()
}
