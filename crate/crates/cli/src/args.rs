use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "mfeat",
    version,
    about = "Learn and evaluate model features of tabular MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train model features and write a checkpoint, loss curve and report.
    Train(TrainArgs),
    /// Evaluate a checkpoint against an MDP and report value errors and the bound.
    Eval(EvalArgs),
    /// Train on a planted MDP and transfer the features to resampled tasks.
    Transfer(TransferArgs),
    /// Print the coarsest bisimulation partition of an MDP.
    Oracle(OracleArgs),
    /// Write the MDP selected by --env as JSON.
    Mdp(MdpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Gridworld,
    Planted,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    /// Same partition, then the perturbed partition.
    Both,
    /// Same partition only.
    None,
    /// Perturbed partition only.
    Only,
}

/// Environment selection shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct EnvArgs {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Environment; defaults to the grid world (planted for `transfer`).
    #[arg(long, value_enum)]
    pub env: Option<EnvKind>,
    /// MDP JSON file used with --env file.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    /// Seed for the planted MDP and the learner initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of states of the planted MDP.
    #[arg(long)]
    pub states: Option<usize>,
    /// Number of planted clusters.
    #[arg(long)]
    pub clusters: Option<usize>,
}

/// Learner hyperparameters settable from the command line.
#[derive(Debug, Clone, Default, Args)]
pub struct LearnerArgs {
    /// Feature dimension n.
    #[arg(long)]
    pub features: Option<usize>,
    /// Weight of the successor-feature residual.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Total number of gradient updates.
    #[arg(long)]
    pub updates: Option<usize>,
    /// Updates between k-means projections.
    #[arg(long)]
    pub proj_every: Option<usize>,
    /// Projections run strictly before this update count.
    #[arg(long)]
    pub proj_until: Option<usize>,
    /// Loss-curve sampling interval.
    #[arg(long)]
    pub log_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Output directory for checkpoint.json, loss.csv and the report.
    #[arg(long)]
    pub out: PathBuf,
    /// Report format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Checkpoint JSON written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report file; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Source-training hyperparameters.
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Number of transfer tasks per protocol.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Which partitions the transfer tasks use.
    #[arg(long, value_enum)]
    pub perturb: Option<PerturbMode>,
    /// Learning rate of the per-task feature-model fit.
    #[arg(long)]
    pub transfer_lr: Option<f64>,
    /// Updates of the per-task feature-model fit.
    #[arg(long)]
    pub transfer_updates: Option<usize>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Result format; CSV unless configured otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Tolerance for comparing rewards and cluster masses.
    #[arg(long, default_value_t = model_features::abstraction::REFINE_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct MdpArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
