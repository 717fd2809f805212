//! `alternator` command-line tool.
//!
//! Every run writes `<out>.manifest.json` next to its main output. The
//! manifest stores the fully resolved command, so `alternator replay
//! --manifest <file>` regenerates the same bytes.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Output paths that are relative get resolved against this directory.
pub const OUT_DIR_ENV: &str = "ALTERNATOR_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "alternator", version, about = "Train, evaluate and sample Alternator sequence models")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Fit a model to a CSV dataset.
    Train(TrainArgs),
    /// Score a trained model on decoding, imputation or forecasting.
    Eval(EvalArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Write the temporal Vendi Score profile of a dataset.
    Vendi(VendiArgs),
    /// Draw sequences from a trained model.
    Sample(SampleArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training data in `seq,t,x0..,z0..` layout.
    #[arg(long)]
    pub data: PathBuf,
    /// Use the z columns as supervision. Without this flag they are dropped
    /// and the latent is learned unsupervised.
    #[arg(long)]
    pub features_in_data: bool,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Keep probability for the observation mask.
    #[arg(long)]
    pub p_mask: Option<f64>,
    /// Use a constant gate instead of the diversity-driven one.
    #[arg(long)]
    pub no_adaptive_alpha: bool,
    /// Train without observation masking.
    #[arg(long)]
    pub no_masking: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Decode,
    Impute,
    Forecast,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: Task,
    /// Missing rates to sweep (impute only). Defaults to 0.1,0.3,0.5,0.7,0.9,0.95.
    #[arg(long, value_delimiter = ',')]
    pub missing_rate: Option<Vec<f64>>,
    /// Forecast horizon (forecast only, default 96).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Trailing context length (forecast only, default 96).
    #[arg(long)]
    pub context: Option<usize>,
    /// Metrics CSV (`metric,value`).
    #[arg(long)]
    pub out: PathBuf,
    /// Predictions CSV (decode and forecast only).
    #[arg(long)]
    pub pred_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value = "noisy-sine")]
    pub preset: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    Rbf,
    LinearCosine,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VendiArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: KernelArg,
    /// RBF bandwidth; the median heuristic over the data when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub steps: usize,
    /// Number of sequences.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or preset: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(String),
}

impl From<alternator::Error> for CliError {
    fn from(e: alternator::Error) -> Self {
        match e {
            alternator::Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // help and version exit 0, parse errors exit 2
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
