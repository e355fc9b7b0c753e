//! `tfaml`: synthesize, featurize, train, tune, evaluate and inspect.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use tfaml::dataset::FeatureSet;
use tfaml::spectral::{ExportFormat, WindowFn};

#[derive(Parser)]
#[command(name = "tfaml", version, about = "Time-frequency features and random forests for transaction monitoring")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Build a features.csv for one feature set.
    Featurize(FeaturizeArgs),
    /// Train a random forest.
    Train(TrainArgs),
    /// Search forest parameters by simulated annealing.
    Tune(TuneArgs),
    /// Score a features file and report error rates and ROC.
    Evaluate(EvaluateArgs),
    /// Rank features by mutual information with the label.
    Importance(ImportanceArgs),
    /// Export one customer's spectrogram.
    Spectrogram(SpectrogramArgs),
}

#[derive(Args)]
struct HorizonArgs {
    /// First day of the horizon; defaults to the earliest transaction date.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Horizon length in days.
    #[arg(long)]
    days: Option<u32>,
    /// Only use transactions from this channel.
    #[arg(long)]
    channel: Option<String>,
}

#[derive(Args)]
struct StftArgs {
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    fft_len: Option<usize>,
    /// rectangular or hann.
    #[arg(long)]
    window_fn: Option<WindowFn>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    positive_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    transactions: Option<PathBuf>,
    #[arg(long)]
    crm: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[command(flatten)]
    stft: StftArgs,
    /// T, TF, CRM, T+CRM, TF+CRM or T+TF+CRM.
    #[arg(long)]
    feature_set: Option<FeatureSet>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Share of each class kept out of training.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    min_split: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed of the annealing chain.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trees: Option<usize>,
    /// Seed of every forest trained during the search.
    #[arg(long)]
    forest_seed: Option<u64>,
    #[command(flatten)]
    split: SplitArgs,
    /// Share of the training rows used for validation.
    #[arg(long)]
    valid_frac: Option<f64>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// auto, all or holdout. auto scores the hold-out rows when the model
    /// records a hold-out split, otherwise every row.
    #[arg(long)]
    rows: Option<commands::Rows>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long)]
    roc_out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrogramArgs {
    #[arg(long)]
    transactions: Option<PathBuf>,
    #[arg(long)]
    customer: Option<String>,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[command(flatten)]
    stft: StftArgs,
    /// csv or pgm.
    #[arg(long)]
    format: Option<ExportFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Featurize(_) => "featurize",
            Command::Train(_) => "train",
            Command::Tune(_) => "tune",
            Command::Evaluate(_) => "evaluate",
            Command::Importance(_) => "importance",
            Command::Spectrogram(_) => "spectrogram",
        }
    }
}

/// One-line JSON error record on stderr.
fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "status": "error", "kind": kind, "message": message });
    eprintln!("{line}");
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tfaml::Error>() {
            return e.kind();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return "config";
        }
    }
    "config"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            report_error("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            report_error(error_kind(&e), &message);
            ExitCode::FAILURE
        }
    }
}
