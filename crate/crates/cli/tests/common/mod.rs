#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddig_core::embedstore::{
    write_embedding_file, EmbeddingPaths, EmbeddingRecord, EmbeddingSet, Split, View,
};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn ddig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddig"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.lines().count(), 1, "stderr: {text}");
    serde_json::from_str(text.trim()).expect("stderr is one JSON object")
}

pub struct Item {
    pub id: String,
    pub region: &'static str,
    pub class: &'static str,
    pub object: Option<Vec<f32>>,
    pub full: Vec<f32>,
    pub background: Vec<f32>,
}

pub fn build_set(split: Split, dim: usize, items: &[Item]) -> EmbeddingSet {
    let mut records = Vec::new();
    let mut vectors = Vec::new();
    let mut next = [0usize; 3];
    for item in items {
        for (view, row) in [
            (View::Full, Some(&item.full)),
            (View::Object, item.object.as_ref()),
            (View::Background, Some(&item.background)),
        ] {
            let Some(row) = row else { continue };
            records.push(EmbeddingRecord {
                item_id: item.id.clone(),
                split,
                region: item.region.into(),
                object_class: item.class.into(),
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

pub fn write_set(stem: &Path, split: Split, dim: usize, items: &[Item]) {
    write_embedding_file(&build_set(split, dim, items), &EmbeddingPaths::from_stem(stem))
        .expect("fixture written");
}

/// Real and generated sets with one real item whose background alone is
/// never reached: `Africa-p1` sits in a background cluster with four
/// helpers that are far from everything in every view.
pub fn write_planted(dir: &Path) -> (PathBuf, PathBuf) {
    let mut real = Vec::new();
    let mut generated = Vec::new();
    for (ri, region) in ["Africa", "Europe"].into_iter().enumerate() {
        let base = ri as f32 * 10_000.0;
        let grid = |i: usize| vec![base + (i % 5) as f32, (i / 5) as f32];
        let item = |id: String, object: Vec<f32>, full: Vec<f32>, background: Vec<f32>| Item {
            id,
            region,
            class: "pot",
            object: Some(object),
            full,
            background,
        };
        for i in 0..20 {
            real.push(item(format!("{region}-r{i:02}"), grid(i), grid(i), grid(i)));
            generated.push(item(format!("{region}-g{i:02}"), grid(i), grid(i), grid(i)));
        }
        if region == "Africa" {
            let far = |c: f32, h: usize| vec![base + c + 0.01 * h as f32, c];
            real.push(item("Africa-p1".into(), grid(7), grid(7), far(500.0, 0)));
            for h in 1..=4 {
                real.push(item(format!("Africa-q{h}"), far(700.0, h), far(800.0, h), far(500.0, h)));
            }
        }
    }
    let r = dir.join("planted_real");
    let g = dir.join("planted_gen");
    write_set(&r, Split::Real, 2, &real);
    write_set(&g, Split::Generated, 2, &generated);
    (r, g)
}
