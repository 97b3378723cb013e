mod common;

use std::collections::BTreeSet;
use std::path::Path;

use common::{ddig, fixtures, stderr_json, write_planted};
use ddig_core::analysis::{FailureModeHit, RunReport};
use ddig_core::decompose::{write_pgm, PixelMask};
use ddig_core::embedstore::{read_embedding_file, EmbeddingPaths, SliceQuery};
use ddig_core::manifold::oracle;

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn compute_toy(out: &Path, extra: &[&str]) -> std::process::Output {
    let f = fixtures();
    let mut args = vec![
        "compute",
        "--real",
        path(&f.join("toy_real")).to_owned().leak(),
        "--generated",
        path(&f.join("toy_gen")).to_owned().leak(),
        "--run-id",
        "toy",
        "--prompt-template",
        "{object} in {region}",
        "--out",
        path(out),
    ];
    args.extend_from_slice(extra);
    ddig(&args)
}

#[test]
fn compute_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy.json");
    let run = compute_toy(&out, &[]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let produced = std::fs::read_to_string(&out).unwrap();
    let golden = std::fs::read_to_string(fixtures().join("toy.report.json")).unwrap();
    assert_eq!(produced, golden);

    // Byte-identical on a second run.
    let again = dir.path().join("again.json");
    assert!(compute_toy(&again, &[]).status.success());
    assert_eq!(std::fs::read(&again).unwrap(), produced.as_bytes());
}

#[test]
fn golden_report_agrees_with_oracle() {
    let f = fixtures();
    let golden = RunReport::from_json(
        &std::fs::read_to_string(f.join("toy.report.json")).unwrap(),
    )
    .unwrap();
    let real = read_embedding_file(&EmbeddingPaths::from_stem(f.join("toy_real"))).unwrap();
    let generated = read_embedding_file(&EmbeddingPaths::from_stem(f.join("toy_gen"))).unwrap();
    assert_eq!(golden.cells.len(), 9);
    for cell in &golden.cells {
        let r = real.slice(&SliceQuery::view(cell.view).region(&cell.group));
        let g = generated.slice(&SliceQuery::view(cell.view).region(&cell.group));
        let n_total = generated
            .records()
            .iter()
            .filter(|r| r.region == cell.group)
            .map(|r| r.item_id.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        let o = oracle::evaluate(r.vectors(), g.vectors(), real.dimension(), golden.k, n_total).unwrap();
        let m = &cell.metrics;
        assert_eq!((m.precision, m.coverage), (o.precision, o.coverage), "{} {}", cell.group, cell.view);
        assert_eq!((m.n_inside, m.n_covered, m.n_generated_total), (o.n_inside, o.n_covered, n_total));
    }
}

#[test]
fn compute_writes_plot_series_and_disparity() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("plot.csv");
    let disparity = dir.path().join("disparity.json");
    let run = compute_toy(
        &dir.path().join("r.json"),
        &["--plot-csv", path(&plot).to_owned().leak(), "--disparity", path(&disparity).to_owned().leak()],
    );
    assert!(run.status.success());
    let csv = std::fs::read_to_string(&plot).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "group,view,precision,coverage,n_generated_total,n_real");
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[2], "Africa,object,0.75,0.7777777777777778,8,9");
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&disparity).unwrap()).unwrap();
    assert_eq!(stats["views"][2]["precision"]["worst_group"], "Europe");
}

#[test]
fn compute_view_subset_and_group_by_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let run = compute_toy(&out, &["--views", "background", "--group-by", "object_class", "--k", "1"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = RunReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.k, 1);
    let groups: Vec<_> = report.cells.iter().map(|c| (c.group.as_str(), c.view.as_str())).collect();
    assert_eq!(groups, [("bag", "background"), ("pot", "background")]);
}

#[test]
fn missing_manifest_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    for view in ["full", "object", "background"] {
        let name = format!("toy_real.{view}.ddig");
        std::fs::copy(f.join(&name), dir.path().join(&name)).unwrap();
    }
    let out = ddig(&[
        "compute",
        "--real",
        path(&dir.path().join("toy_real")),
        "--generated",
        path(&f.join("toy_gen")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "ManifestMismatch");
    assert!(out.stdout.is_empty());
}

#[test]
fn zero_k_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = compute_toy(&dir.path().join("r.json"), &["--k", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "UsageError");
    assert!(err["message"].as_str().unwrap().contains("--k"));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn truncated_view_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    for suffix in ["manifest.jsonl", "full.ddig", "object.ddig", "background.ddig"] {
        let name = format!("toy_gen.{suffix}");
        std::fs::copy(f.join(&name), dir.path().join(&name)).unwrap();
    }
    let bg = dir.path().join("toy_gen.background.ddig");
    let bytes = std::fs::read(&bg).unwrap();
    std::fs::write(&bg, &bytes[..bytes.len() - 1]).unwrap();
    let out = ddig(&[
        "compute",
        "--real",
        path(&f.join("toy_real")),
        "--generated",
        path(&dir.path().join("toy_gen")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "TruncatedPayload");
}

fn mine(real: &Path, generated: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["mine", "--real", path(real), "--generated", path(generated)];
    args.extend_from_slice(extra);
    ddig(&args)
}

#[test]
fn mine_finds_the_planted_item() {
    let dir = tempfile::tempdir().unwrap();
    let (real, generated) = write_planted(dir.path());
    let out = dir.path().join("hits.jsonl");
    let run = mine(&real, &generated, &["--mode", "low_diversity_background", "--out", path(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let hits: Vec<FailureModeHit> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(hits.len(), 1, "{text}");
    assert_eq!(hits[0].item_id, "Africa-p1");
    assert_eq!(hits[0].region, "Africa");
    let line: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(line["mode"], "low_diversity_background");
    assert_eq!(line["witness"], serde_json::json!({"object": true, "full": true, "background": false}));
}

#[test]
fn mine_with_zero_hits_writes_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let (real, generated) = write_planted(dir.path());
    let out = dir.path().join("hits.jsonl");
    let run = mine(&real, &generated, &["--mode", "low_realism_background", "--out", path(&out)]);
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), b"");
}

#[test]
fn mine_rejects_unknown_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (real, generated) = write_planted(dir.path());
    let run = mine(&real, &generated, &["--mode", "low_realism_sky"]);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(stderr_json(&run)["error"], "UsageError");
}

#[test]
fn mine_sampling_is_seeded() {
    let f = fixtures();
    let args = ["--mode", "low_realism_background,low_diversity_object", "--sample", "2", "--seed", "7"];
    let a = mine(&f.join("toy_real"), &f.join("toy_gen"), &args);
    let b = mine(&f.join("toy_real"), &f.join("toy_gen"), &args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let all = mine(&f.join("toy_real"), &f.join("toy_gen"), &args[..2]);
    let all = String::from_utf8(all.stdout).unwrap();
    let picked = String::from_utf8(a.stdout).unwrap();
    assert_eq!(picked.lines().count(), 2.min(all.lines().count()));
    let mut rest = all.lines();
    for line in picked.lines() {
        assert!(rest.any(|l| l == line), "sample keeps sorted order");
    }
}

#[test]
fn compare_matches_golden_csv() {
    let f = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("table.json");
    let out = ddig(&[
        "compare",
        path(&f.join("orig.report.json")),
        path(&f.join("new.report.json")),
        "--json",
        path(&json),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = std::fs::read_to_string(f.join("compare.golden.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(table["new_template"], "{object} in {region} at home");
    assert_eq!(table["views"][1]["columns"][1]["new_worst_group"], "Europe");
}

#[test]
fn compare_report_with_itself_gives_zero_deltas() {
    let golden = fixtures().join("toy.report.json");
    let out = ddig(&["compare", path(&golden), path(&golden)]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[3].split(',').skip(1).all(|v| v == "0.000"), "{}", lines[3]);
    assert!(lines[4].split(',').skip(1).all(|v| v == "0%"), "{}", lines[4]);
}

#[test]
fn compare_rejects_different_k() {
    let dir = tempfile::tempdir().unwrap();
    let k5 = dir.path().join("k5.json");
    assert!(compute_toy(&k5, &["--k", "5"]).status.success());
    let out = ddig(&["compare", path(&fixtures().join("toy.report.json")), path(&k5)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "ConfigMismatch");
}

fn partition(mask: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["partition", path(mask)];
    args.extend_from_slice(extra);
    ddig(&args)
}

fn zeroed(out: &std::process::Output) -> usize {
    let spec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    spec["zeroed"].as_array().unwrap().len()
}

#[test]
fn partition_pgm_masks() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.pgm");
    write_pgm(&empty, &PixelMask::filled(224, 224, 0).unwrap()).unwrap();
    let out = partition(&empty, &["--view", "object"]);
    assert!(out.status.success());
    assert_eq!(zeroed(&out), 196);
    assert_eq!(zeroed(&partition(&empty, &["--view", "background"])), 0);

    let single = dir.path().join("single.pgm");
    let mut mask = PixelMask::filled(224, 224, 0).unwrap();
    mask.set(100, 37, true);
    write_pgm(&single, &mask).unwrap();
    let out = partition(&single, &[]);
    assert_eq!(zeroed(&out), 195);
    let spec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(spec["view"], "object");
    assert_eq!(zeroed(&partition(&single, &["--view", "background"])), 1);
}

#[test]
fn partition_rejects_non_p5_and_bad_grid() {
    let dir = tempfile::tempdir().unwrap();
    let ascii = dir.path().join("ascii.pgm");
    std::fs::write(&ascii, "P2\n2 2\n255\n0 255\n255 0\n").unwrap();
    let out = partition(&ascii, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "MalformedMask");

    let ok = dir.path().join("ok.pgm");
    write_pgm(&ok, &PixelMask::filled(8, 8, 0).unwrap()).unwrap();
    let out = partition(&ok, &["--patch-size", "15"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "IndivisibleGrid");
}

#[test]
fn validate_reports_cell_counts() {
    let f = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("v.json");
    let real = f.join("toy_real");
    let out = ddig(&["validate", path(&real), "--min-per-cell", "5", "--out", path(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v[0]["items"], 30);
    assert_eq!(v[0]["deficits"], serde_json::json!([]));

    let out = ddig(&["validate", path(&real), "--min-per-cell", "6"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "ClassImbalance");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["deficits"].as_array().unwrap().len(), 6);
}
