mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::UsageError;

/// Learned collision detection: environments, datasets, training, evaluation and sweeps.
#[derive(Parser, Debug)]
#[command(name = "deepcollide", version, about)]
pub struct Cli {
    /// JSON config whose values are overridden by command-line flags. A
    /// top-level key named after the subcommand selects a section.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Run everything on a single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded desk environment.
    GenEnv(GenEnvArgs),
    /// Sample labeled train and test sets from an environment.
    Sample(SampleArgs),
    /// Train a DeepCollide or Fastron model.
    Train(TrainArgs),
    /// Evaluate a trained model on a labeled dataset.
    Eval(EvalArgs),
    /// Predict labels for configurations.
    Predict(PredictArgs),
    /// Run an experiment sweep along one axis.
    Sweep(SweepArgs),
    /// Extract the time/error Pareto frontier from sweep results.
    Pareto(ParetoArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenEnv(_) => "gen-env",
            Command::Sample(_) => "sample",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Predict(_) => "predict",
            Command::Sweep(_) => "sweep",
            Command::Pareto(_) => "pareto",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct GenEnvArgs {
    #[arg(long)]
    pub robots: Option<usize>,
    #[arg(long)]
    pub obstacles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `far` (bases at least 1.5 m apart) or `close` (at most 0.8 m).
    #[arg(long)]
    pub placement: Option<String>,
    /// Configurations sampled for the density estimate.
    #[arg(long)]
    pub density_samples: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SampleArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `csv` or `binary`.
    #[arg(long)]
    pub format: Option<String>,
    /// Also write FK feature CSVs next to the datasets.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub features: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `deepcollide` or `fastron`.
    #[arg(long)]
    pub model: Option<String>,
    /// Encoding frequencies.
    #[arg(long = "L")]
    #[serde(rename = "frequencies")]
    pub frequencies: Option<usize>,
    /// Positive target scale (DeepCollide) or positive bias (Fastron).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Fastron kernel width.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fastron update cap.
    #[arg(long)]
    pub imax: Option<usize>,
    /// Fastron support cap.
    #[arg(long)]
    pub smax: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Training report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Model file written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// `f64` (exact) or `f32` (benchmark).
    #[arg(long)]
    pub precision: Option<String>,
    /// Metrics JSON path; printed to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Also write a one-row metrics CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// CSV with `q0..` columns; a label column is ignored.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub precision: Option<String>,
    /// Predictions CSV path; printed to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    /// `dof`, `density` or `sample-size`.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
    /// Robot counts for the dof axis, as `1..6` or `1,2,3`.
    #[arg(long)]
    pub robots: Option<String>,
    /// Comma-separated model families.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// `default` (recommended settings) or `grid` (full hyperparameter grids).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Multiplies train and test sizes.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long)]
    pub obstacles: Option<usize>,
    #[arg(long)]
    pub placement: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ParetoArgs {
    /// `results.csv` written by `sweep`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Keep only rows of this model family.
    #[arg(long)]
    pub model: Option<String>,
    /// Frontier CSV path; printed to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<deepcollide_core::Error>() {
            return if e.is_usage() { 2 } else { 1 };
        }
    }
    1
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<csv::Error>().is_some_and(|e| {
                matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
            })
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 if matches!(cli.command, Command::Sweep(_)) => "info",
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
