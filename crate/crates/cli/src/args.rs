use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "selfseed",
    version,
    about = "Zero-shot image classification from precomputed embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank candidates per label and write the seed set.
    SelectSeed(RunArgs),
    /// Seed training plus self-training cycles; writes checkpoints and history.
    Train(TrainArgs),
    /// Label every image of a store with a saved classifier.
    Predict(PredictArgs),
    /// Selection and classification accuracy against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic store with known ground truth.
    Synth(SynthArgs),
    /// Seed selection, training and classification with every report.
    FullRun(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Default,
    LargeLabelspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Default,
    Improved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

/// Flags shared by every pipeline subcommand. All are optional so that a
/// config file can supply them; flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Store directory or manifest file.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with the same keys as the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Images taken per label for the seed and per cycle.
    #[arg(long)]
    pub k: Option<usize>,
    /// Neighbors in the consensus score; defaults to k.
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub b_size: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub i_epochs: Option<usize>,
    #[arg(long)]
    pub r_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub loss_limit: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    /// Append the seed set to every cycle's tuning set.
    #[arg(long)]
    pub retain_seed: bool,
    /// Comma-separated k values for the selection report; defaults to k.
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Standardize feature columns before training.
    #[arg(long)]
    pub standardize_features: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Reuse a `rankings.json` from select-seed instead of ranking inline.
    #[arg(long)]
    pub rankings: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint directory written by train or full-run.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Score this classifier's predictions as the complete variant.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub images_per_class: Option<usize>,
    #[arg(long)]
    pub clip_dim: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub label_bias: Option<f64>,
    #[arg(long)]
    pub confusion: Option<f64>,
    #[arg(long)]
    pub feature_scale: Option<f64>,
    /// Omit ground truth from the manifest.
    #[arg(long)]
    pub no_ground_truth: bool,
}
