use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "hsfusion",
    version,
    about = "Hyperspectral and LiDAR fusion with attention ConvLSTM networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stepwise training; writes checkpoints, loss history, metrics and a map.
    Train(Common),
    /// Scores a checkpoint and writes its classification map.
    Eval(EvalArgs),
    /// Finite-difference gradient checks for every layer and block.
    Gradcheck(GradcheckArgs),
    /// Trains every combination of the ablation toggles.
    Ablate(Common),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Text,
    JsonLines,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration (TOML); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene manifest listing the HSI, LiDAR and label tensors.
    #[arg(long, conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Use the generated two-source toy scene.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Patch side (odd).
    #[arg(long)]
    pub window: Option<usize>,
    /// Principal components kept from the HSI cube.
    #[arg(long)]
    pub pca: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs for the LiDAR, HSI and fusion phases: N1,N2,N3 or one value for all.
    #[arg(long)]
    pub epochs: Option<String>,
    /// Learning rates in the same order as --epochs.
    #[arg(long)]
    pub lr: Option<String>,
    /// Toggle settings such as `-seab,msrab=off`; for ablate, the toggles to vary.
    #[arg(long)]
    pub toggles: Option<String>,
    /// Stop a phase once its training OA (percent) reaches this value.
    #[arg(long)]
    pub target_oa: Option<f64>,
    /// Stop a phase once the loss of the head it trains falls to this value.
    #[arg(long)]
    pub target_loss: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which samples to score.
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    /// Components to check (comma-separated); all by default.
    #[arg(long, value_delimiter = ',')]
    pub component: Vec<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Perturbs every analytic gradient before comparison.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}
