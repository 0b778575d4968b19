use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dataset_equity::pipeline::{run_pipeline, run_stage, PipelineConfig, PipelineError, RunArtifacts, Stage};
use dataset_equity::trainer::{run_equity_demo, EquityDemoConfig};
use dataset_equity::EmbeddingFormat;
use serde_json::json;

const THREADS_ENV: &str = "DATASET_EQUITY_THREADS";

#[derive(Parser)]
#[command(name = "dataset-equity", version, about = "Cluster-likelihood sample weighting for embedding datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage, reusing cached outputs whose inputs and parameters match.
    Run(ConfigArgs),
    /// Validate the input embeddings and store them as DSEQ.
    Ingest(ConfigArgs),
    /// Project the ingested embeddings with t-SNE.
    Project(ConfigArgs),
    /// Cluster the projected coordinates.
    Cluster(ConfigArgs),
    /// Turn cluster sizes into scaled likelihoods.
    Likelihoods(ConfigArgs),
    /// Map likelihoods to per-sample training weights.
    Weights(ConfigArgs),
    /// Write the likelihood histogram and run summary.
    Report(ConfigArgs),
    /// Train uniform and weighted classifiers on synthetic imbalanced data.
    Demo(DemoArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config JSON.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `input.path`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Overrides `input.format`.
    #[arg(long, value_parser = parse_format)]
    format: Option<EmbeddingFormat>,
}

#[derive(Args)]
struct DemoArgs {
    /// Number of seeds, starting at `--first-seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Directory for `demo_epochs.csv` and `demo_summary.json`.
    #[arg(long, default_value = "demo-out")]
    out: PathBuf,
}

fn parse_format(s: &str) -> Result<EmbeddingFormat, String> {
    match s {
        "binary" | "dseq" => Ok(EmbeddingFormat::Binary),
        "csv" => Ok(EmbeddingFormat::Csv),
        _ => Err(format!("unknown format `{s}` (expected binary or csv)")),
    }
}

fn load_config(a: &ConfigArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::from_file(&a.config)?;
    if let Some(dir) = &a.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(input) = &a.input {
        cfg.input.path = input.clone();
    }
    if let Some(format) = a.format {
        cfg.input.format = format;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_artifacts(art: &RunArtifacts) {
    for s in &art.cached {
        println!("{s}: cached");
    }
    for s in &art.executed {
        println!("{s}: done");
    }
    for path in art.files.values() {
        println!("  {}", path.display());
    }
}

fn pipeline_command(a: &ConfigArgs, stage: Option<Stage>) -> Result<(), PipelineError> {
    let cfg = load_config(a)?;
    let art = match stage {
        None => run_pipeline(&cfg)?,
        Some(s) => run_stage(&cfg, s)?,
    };
    print_artifacts(&art);
    Ok(())
}

fn demo(a: &DemoArgs) -> Result<(), String> {
    std::fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    let mut csv = csv::Writer::from_path(a.out.join("demo_epochs.csv")).map_err(|e| e.to_string())?;
    csv.write_record(["seed", "arm", "epoch", "loss", "accuracy", "rare_recall"])
        .map_err(|e| e.to_string())?;
    let mut per_seed = Vec::new();
    let mut wins = 0u64;
    for seed in a.first_seed..a.first_seed + a.seeds {
        let cfg = EquityDemoConfig::imbalanced_pair(seed);
        let out = run_equity_demo(&cfg).map_err(|e| format!("[demo] seed {seed}: {e}"))?;
        for (arm, res) in [("uniform", &out.uniform), ("weighted", &out.weighted)] {
            for m in &res.epochs {
                csv.write_record([
                    seed.to_string(),
                    arm.to_string(),
                    m.epoch.to_string(),
                    m.loss.to_string(),
                    m.accuracy.to_string(),
                    m.rare_recall.to_string(),
                ])
                .map_err(|e| e.to_string())?;
            }
        }
        let recall = |e: &dataset_equity::trainer::Evaluation| e.per_blob_recall[cfg.rare_blob];
        wins += out.weighted_not_worse as u64;
        per_seed.push(json!({
            "seed": seed,
            "n_clusters": out.n_clusters,
            "mean_weight": out.mean_weight,
            "rare_mean_weight": out.rare_mean_weight,
            "uniform_rare_recall": recall(&out.uniform.evaluation),
            "weighted_rare_recall": recall(&out.weighted.evaluation),
            "weighted_not_worse": out.weighted_not_worse,
        }));
        println!(
            "seed {seed}: rare recall uniform {:.3} weighted {:.3}",
            recall(&out.uniform.evaluation).unwrap_or(0.0),
            recall(&out.weighted.evaluation).unwrap_or(0.0)
        );
    }
    csv.flush().map_err(|e| e.to_string())?;
    // at least 8 of every 10 seeds must not lose
    let pass = wins * 10 >= 8 * a.seeds;
    let summary = json!({
        "config": EquityDemoConfig::imbalanced_pair(a.first_seed),
        "seeds": per_seed,
        "weighted_not_worse_count": wins,
        "n_seeds": a.seeds,
        "verdict": if pass { "pass" } else { "fail" },
    });
    write_json(&a.out.join("demo_summary.json"), &summary)?;
    println!("weighted rare recall >= uniform in {wins}/{} seeds: {}", a.seeds, if pass { "pass" } else { "fail" });
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| e.to_string())?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Run(a) => pipeline_command(a, None),
        Command::Ingest(a) => pipeline_command(a, Some(Stage::Ingest)),
        Command::Project(a) => pipeline_command(a, Some(Stage::Project)),
        Command::Cluster(a) => pipeline_command(a, Some(Stage::Cluster)),
        Command::Likelihoods(a) => pipeline_command(a, Some(Stage::Likelihoods)),
        Command::Weights(a) => pipeline_command(a, Some(Stage::Weights)),
        Command::Report(a) => pipeline_command(a, Some(Stage::Report)),
        Command::Demo(a) => {
            return match demo(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ PipelineError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
