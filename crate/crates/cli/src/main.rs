use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use coregp::experiment::{self, DatasetSource, ExperimentSpec};
use coregp::train::{ModelKind, TrainConfig};

/// Coreset-based variational GP experiments.
#[derive(Parser)]
#[command(name = "coregp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (model, size, fold) cell and write results.
    Run(RunArgs),
    /// Re-read a results directory and verify bound ordering and the
    /// full-coreset identity.
    Check {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `synthetic-<1..5>` or `manifest:<key>`.
    #[arg(long)]
    dataset: String,
    #[arg(long, value_delimiter = ',', default_value = "exact,titsias,svgp,cvtgp")]
    models: Vec<ModelKind>,
    /// C or M values; `-` for none.
    #[arg(long, default_value = "-")]
    sizes: String,
    #[arg(long, default_value_t = 5000)]
    epochs: usize,
    #[arg(long, default_value_t = 3000)]
    patience: usize,
    #[arg(long, default_value_t = 512)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Synthetic dataset size.
    #[arg(long)]
    n: Option<usize>,
    /// Dataset manifest for `manifest:<key>` selectors.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

/// `COREGP_OUT` wins over `--out` when set.
fn resolve_out(flag: PathBuf) -> PathBuf {
    std::env::var_os("COREGP_OUT")
        .filter(|v| !v.is_empty())
        .map_or(flag, PathBuf::from)
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty() && *t != "-")
        .map(|t| t.parse().with_context(|| format!("invalid size {t:?}")))
        .collect()
}

fn run(args: RunArgs) -> Result<bool> {
    let mut dataset = DatasetSource::parse(&args.dataset, args.manifest.as_deref())?;
    if let (DatasetSource::Synthetic { n, .. }, Some(size)) = (&mut dataset, args.n) {
        *n = size;
    }
    let spec = ExperimentSpec {
        dataset,
        models: args.models,
        sizes: parse_sizes(&args.sizes)?,
        train: TrainConfig {
            batch_size: args.batch,
            max_epochs: args.epochs,
            patience_epochs: args.patience,
            lr: args.lr,
            seed: args.seed,
            ..TrainConfig::default()
        },
        folds: args.folds,
        train_frac: 0.7,
        seed: args.seed,
        out_dir: resolve_out(args.out),
        threads: args.threads,
    };
    let output = experiment::run_experiment(&spec)?;
    for row in &output.rows {
        let size = row.size.map_or("-".to_string(), |s| s.to_string());
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{} {} size={} fold={} bound={} rmse={} epochs={} {}",
            row.dataset,
            row.model,
            size,
            row.fold,
            fmt(row.bound),
            fmt(row.rmse),
            row.epochs,
            row.status
        );
    }
    println!("results written to {}", spec.out_dir.display());
    Ok(output.all_ok())
}

fn check(out: PathBuf) -> Result<bool> {
    let lines = experiment::check_results(&out)?;
    for line in &lines {
        println!("{line}");
    }
    Ok(lines.iter().all(|l| l.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Check { out } => check(resolve_out(out)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
