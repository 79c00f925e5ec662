//! `nscr`: generate synthetic bundles, train and evaluate rankers, sweep
//! hyperparameters and recommend items to social users.
//!
//! Exit status is 0 on success, 1 for usage errors, 2 for data errors and 3
//! when a non-finite value shows up during training.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<nscr_core::Error> for CliError {
    fn from(e: nscr_core::Error) -> Self {
        use nscr_core::Error as E;
        match e {
            E::NumericFailure(_) => CliError::Numeric(e.to_string()),
            E::InfeasibleSpec(_) | E::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nscr", version, about = "Neural social collaborative ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic planted-preference bundle.
    Generate(GenerateArgs),
    /// Train a model on a bundle and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on held-out items, or compare two checkpoints.
    Evaluate(EvaluateArgs),
    /// Train NSCR over a grid of one hyperparameter.
    Sweep(SweepArgs),
    /// Rank items for one social user.
    Recommend(RecommendArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Nscr,
    NscrA,
    Mf,
    Sfm,
    SfmA,
    Sr,
    SrA,
    Itempop,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nscr => "nscr",
            ModelKind::NscrA => "nscr-a",
            ModelKind::Mf => "mf",
            ModelKind::Sfm => "sfm",
            ModelKind::SfmA => "sfm-a",
            ModelKind::Sr => "sr",
            ModelKind::SrA => "sr-a",
            ModelKind::Itempop => "itempop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Embedding,
    Dropout,
    Mu,
    Layers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 500 info users, 200 items, 800 social users, 50 bridge users.
    Default,
    /// A few dozen users; for smoke tests.
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Held-out test items of bridge users.
    Test,
    /// Validation items of bridge users.
    Validation,
    /// Planted preferences of non-bridge social users (synthetic bundles only).
    Social,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "default", env = "NSCR_PRESET")]
    pub preset: Preset,
    #[arg(long, env = "NSCR_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "NSCR_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "NSCR_INFO_USERS")]
    pub info_users: Option<usize>,
    #[arg(long, env = "NSCR_ITEMS")]
    pub items: Option<usize>,
    #[arg(long, env = "NSCR_SOCIAL_USERS")]
    pub social_users: Option<usize>,
    #[arg(long, env = "NSCR_BRIDGE_USERS")]
    pub bridge_users: Option<usize>,
    #[arg(long, env = "NSCR_GROUPS")]
    pub groups: Option<usize>,
    #[arg(long, env = "NSCR_INTERACTIONS_PER_USER")]
    pub interactions_per_user: Option<usize>,
    #[arg(long, env = "NSCR_FRIENDS_PER_USER")]
    pub friends_per_user: Option<usize>,
    #[arg(long, env = "NSCR_NOISE")]
    pub noise: Option<f64>,
    #[arg(long, env = "NSCR_HOMOPHILY")]
    pub homophily: Option<f64>,
    /// `key=value` file consulted for any flag not given.
    #[arg(long, env = "NSCR_CONFIG")]
    pub config: Option<PathBuf>,
}

/// Bundle location and ingestion.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, env = "NSCR_DATA")]
    pub data: PathBuf,
    /// Drop non-bridge social users with fewer friends; 0 disables.
    #[arg(long, env = "NSCR_MIN_DEGREE")]
    pub min_degree: Option<usize>,
}

/// Hyperparameters shared by training and sweeping.
#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Embedding size.
    #[arg(long, env = "NSCR_K")]
    pub k: Option<usize>,
    #[arg(long, env = "NSCR_LAYERS")]
    pub layers: Option<usize>,
    #[arg(long, env = "NSCR_DROPOUT")]
    pub dropout: Option<f64>,
    /// Social tradeoff between smoothness and fitting.
    #[arg(long, env = "NSCR_MU")]
    pub mu: Option<f64>,
    #[arg(long, env = "NSCR_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "NSCR_BATCH")]
    pub batch: Option<usize>,
    #[arg(long, env = "NSCR_INIT_STD")]
    pub init_std: Option<f64>,
    #[arg(long, env = "NSCR_SEED")]
    pub seed: Option<u64>,
    /// Seed of the holdout split; defaults to `--seed`.
    #[arg(long, env = "NSCR_SPLIT_SEED")]
    pub split_seed: Option<u64>,
    /// Outer iterations (epochs for baselines).
    #[arg(long, env = "NSCR_ITERATIONS")]
    pub iterations: Option<usize>,
    #[arg(long, env = "NSCR_INNER_EPOCHS")]
    pub inner_epochs: Option<usize>,
    #[arg(long, env = "NSCR_PATIENCE")]
    pub patience: Option<usize>,
    /// Run social propagation during training.
    #[arg(long, env = "NSCR_PROPAGATE")]
    pub propagate: Option<bool>,
    /// `direct` or `fixed-point`.
    #[arg(long, env = "NSCR_SOLVER")]
    pub solver: Option<String>,
    #[arg(long, env = "NSCR_TOLERANCE")]
    pub tolerance: Option<f64>,
    /// Social regularization weight of SR.
    #[arg(long, env = "NSCR_BETA")]
    pub beta: Option<f64>,
    /// Cutoff of the recall tracked during training.
    #[arg(long, env = "NSCR_K_RECALL")]
    pub k_recall: Option<usize>,
    #[arg(long, env = "NSCR_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub model: ModelKind,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Checkpoint path; history and manifest are written next to it.
    #[arg(long, env = "NSCR_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to evaluate.
    #[arg(long, required_unless_present = "compare")]
    pub checkpoint: Option<PathBuf>,
    /// Paired t-test of per-user AUC between two checkpoints.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "checkpoint")]
    pub compare: Option<Vec<PathBuf>>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, env = "NSCR_K_RECALL")]
    pub k_recall: Option<usize>,
    #[arg(long, value_enum, env = "NSCR_TARGET")]
    pub target: Option<Target>,
    /// Seed recorded in the report.
    #[arg(long, env = "NSCR_SEED")]
    pub seed: Option<u64>,
    /// Output directory for report.txt, report.tsv and manifest.txt.
    #[arg(long, env = "NSCR_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "NSCR_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub axis: Axis,
    /// Comma-separated values, or `start:step:end`.
    #[arg(long, env = "NSCR_GRID")]
    pub grid: String,
    /// Comma-separated training seeds.
    #[arg(long, env = "NSCR_SEEDS")]
    pub seeds: Option<String>,
    #[arg(long, value_enum, default_value = "nscr", env = "NSCR_MODEL")]
    pub model: ModelKind,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Parallel jobs; results do not depend on it.
    #[arg(long, env = "NSCR_JOBS")]
    pub jobs: Option<usize>,
    /// Plot-data file (TSV); its manifest is written alongside.
    #[arg(long, env = "NSCR_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long, env = "NSCR_CHECKPOINT")]
    pub checkpoint: PathBuf,
    /// Social user identifier.
    #[arg(long)]
    pub user: String,
    #[arg(long, default_value_t = 10, env = "NSCR_TOP")]
    pub top: usize,
    /// Also write the list to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Recommend(a) => commands::recommend(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
