//! `ddig`: compute decomposed precision/coverage reports, mine failure
//! modes, compare runs and preview patch partitions.

mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddig_core::analysis::{
    compare_runs, disparity_stats, evaluate_run, mine, sample_hits, FailureMode, RunEvaluation,
    RunOptions, RunReport,
};
use ddig_core::decompose::{
    partition_mask, read_pgm, to_attention_spec, MaskView, DEFAULT_IMAGE_SIZE, DEFAULT_PATCH_SIZE,
};
use ddig_core::embedstore::{
    read_embedding_file, validate_class_balance, EmbeddingPaths, EmbeddingSet, GroupKey, View,
};
use ddig_core::manifold::DEFAULT_K;
use serde::Serialize;

use error::{CliError, EXIT_DATA};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "ddig", version, about = "Object/background-decomposed precision and coverage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a per-group, per-view report.
    Compute(ComputeArgs),
    /// Emit failure-mode hits as JSONL.
    Mine(MineArgs),
    /// Compare two reports column by column.
    Compare(CompareArgs),
    /// Turn a PGM mask into the patch attention spec.
    Partition(PartitionArgs),
    /// Check embedding files and per-(region, class) item counts.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Stem of the real embeddings: STEM.manifest.jsonl, STEM.{full,object,background}.ddig
    #[arg(long)]
    real: PathBuf,
    /// Stem of the generated embeddings.
    #[arg(long)]
    generated: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    k: usize,
    #[arg(long, default_value = "region")]
    group_by: GroupKey,
    #[arg(long, default_value = "run")]
    run_id: String,
    #[arg(long, default_value = "")]
    prompt_template: String,
}

#[derive(Args)]
struct ComputeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated subset of full, object, background.
    #[arg(long, value_delimiter = ',', default_value = "full,object,background")]
    views: Vec<View>,
    /// Include per-reference-item ball counts in every cell.
    #[arg(long)]
    reference_counts: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot series: one CSV row per (group, view).
    #[arg(long)]
    plot_csv: Option<PathBuf>,
    /// Worst/best group, span and ratio per view and metric.
    #[arg(long)]
    disparity: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated failure modes.
    #[arg(long, value_delimiter = ',', required = true)]
    mode: Vec<FailureMode>,
    /// Keep at most this many hits, chosen with --seed.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hits path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    original: PathBuf,
    new: PathBuf,
    /// CSV table path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON table path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    /// Binary P5 PGM mask (0 background, 255 object).
    mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
    image_size: usize,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    patch_size: usize,
    #[arg(long, default_value = "object")]
    view: MaskView,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Embedding stems to check.
    #[arg(required = true)]
    stems: Vec<PathBuf>,
    /// Minimum distinct items per (region, class) cell.
    #[arg(long, default_value_t = 1)]
    min_per_cell: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn load(stem: &Path) -> Result<EmbeddingSet> {
    Ok(read_embedding_file(&EmbeddingPaths::from_stem(stem))?)
}

fn evaluate(run: &RunArgs, views: Vec<View>, reference_counts: bool) -> Result<RunEvaluation> {
    let real = load(&run.real)?;
    let generated = load(&run.generated)?;
    let opts = RunOptions {
        run_id: run.run_id.clone(),
        prompt_template: run.prompt_template.clone(),
        k: run.k,
        views,
        group_by: run.group_by,
        reference_counts,
    };
    Ok(evaluate_run(&real, &generated, &opts)?)
}

#[derive(Serialize)]
struct PlotRow<'a> {
    group: &'a str,
    view: View,
    precision: f64,
    coverage: f64,
    n_generated_total: usize,
    n_real: usize,
}

fn plot_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &report.cells {
        w.serialize(PlotRow {
            group: &c.group,
            view: c.view,
            precision: c.metrics.precision,
            coverage: c.metrics.coverage,
            n_generated_total: c.metrics.n_generated_total,
            n_real: c.metrics.n_real,
        })
        .map_err(|e| CliError::usage("IoFailure", e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::usage("IoFailure", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn compute(args: ComputeArgs) -> Result<()> {
    let eval = evaluate(&args.run, args.views, args.reference_counts)?;
    let report = eval.report;
    if let Some(path) = &args.plot_csv {
        write_output(Some(path), &plot_csv(&report)?)?;
    }
    if let Some(path) = &args.disparity {
        let stats = disparity_stats(&report)?;
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        write_output(Some(path), &(json + "\n"))?;
    }
    write_output(args.out.as_deref(), &(report.to_json() + "\n"))
}

/// Views a set of failure modes reads.
fn views_for(modes: &[FailureMode]) -> Vec<View> {
    let mut views: Vec<View> = modes
        .iter()
        .flat_map(|m| match m {
            FailureMode::LowRealismBackground => vec![View::Background],
            FailureMode::LowDiversityBackground | FailureMode::LowDiversityObject => {
                View::ALL.to_vec()
            }
        })
        .collect();
    views.sort();
    views.dedup();
    views
}

fn mine_cmd(args: MineArgs) -> Result<()> {
    let eval = evaluate(&args.run, views_for(&args.mode), false)?;
    let mut hits = mine(&eval, &args.mode)?;
    if let Some(n) = args.sample {
        hits = sample_hits(&hits, n, args.seed);
    }
    let mut out = String::new();
    for h in &hits {
        out.push_str(&serde_json::to_string(h).expect("hit serializes"));
        out.push('\n');
    }
    write_output(args.out.as_deref(), &out)
}

fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RunReport::from_json(&text).map_err(|e| {
        CliError::new("ReportParse", format!("{}: {e}", path.display()), EXIT_DATA)
    })
}

fn compare(args: CompareArgs) -> Result<()> {
    let table = compare_runs(&read_report(&args.original)?, &read_report(&args.new)?)?;
    if let Some(path) = &args.json {
        write_output(Some(path), &(table.to_json() + "\n"))?;
    }
    write_output(args.out.as_deref(), &table.to_csv())
}

fn partition(args: PartitionArgs) -> Result<()> {
    let mask = read_pgm(&args.mask)?;
    let p = partition_mask(&mask, args.image_size, args.patch_size)?;
    write_output(args.out.as_deref(), &(to_attention_spec(&p, args.view).to_json() + "\n"))
}

#[derive(Serialize)]
struct ValidatedSet {
    stem: String,
    dimension: usize,
    items: usize,
    rows: [(View, usize); 3],
    deficits: Vec<ddig_core::embedstore::BalanceDeficit>,
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut sets = Vec::new();
    for stem in &args.stems {
        let set = load(stem)?;
        sets.push(ValidatedSet {
            stem: stem.display().to_string(),
            dimension: set.dimension(),
            items: set.item_ids().len(),
            rows: View::ALL.map(|v| (v, set.view_len(v))),
            deficits: validate_class_balance(&set, args.min_per_cell),
        });
    }
    let json = serde_json::to_string_pretty(&sets).expect("summary serializes");
    write_output(args.out.as_deref(), &(json + "\n"))?;
    let short: usize = sets.iter().map(|s| s.deficits.len()).sum();
    if short > 0 {
        return Err(CliError::new(
            "ClassImbalance",
            format!("{short} region/class cells hold fewer than {} items", args.min_per_cell),
            EXIT_DATA,
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compute(a) => compute(a),
        Command::Mine(a) => mine_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Partition(a) => partition(a),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let message = text.lines().next().unwrap_or_default();
            let message = message.strip_prefix("error: ").unwrap_or(message);
            let err = CliError::usage("UsageError", message);
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(err.exit_code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json_line());
            ExitCode::from(err.exit_code as u8)
        }
    }
}
