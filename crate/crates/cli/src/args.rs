use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::AutoValue;

#[derive(Debug, Parser)]
#[command(name = "salab", version, about = "Scale-anchoring laboratory: generate, train, evaluate, probe")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate convection–diffusion trajectories.
    GenData(GenDataArgs),
    /// Train a predictor on a reference dataset.
    Train(TrainArgs),
    /// Roll a checkpoint out at several resolutions and tabulate errors.
    Eval(EvalArgs),
    /// Measure the frequency response of a checkpoint.
    Probe(ProbeArgs),
    /// Train and evaluate over a grid of hierarchy depths and loss weights.
    Sweep(SweepArgs),
    /// Track radial band energies along a rollout.
    BandEnergy(BandEnergyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ForcingArg {
    None,
    LowMode,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenDataArgs {
    /// Grid edge length.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Snapshots per trajectory, counting the initial condition.
    #[arg(long)]
    pub snapshots: Option<usize>,
    /// Integrator step. When omitted, the default is halved until stable.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub vx: Option<f64>,
    #[arg(long)]
    pub vy: Option<f64>,
    #[arg(long, value_enum)]
    pub forcing: Option<ForcingArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Frl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    Multires,
    Freqenc,
    Freqloss,
}

/// Training hyperparameters shared by `train` and `sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOptions {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub train_res: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// `table`, `uniform`, or comma-separated level probabilities.
    #[arg(long)]
    pub level_sampling: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub n_freq: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// FRL components to switch off.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub ablate: Vec<Ablation>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs, or `none`.
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Reference dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub opts: TrainOptions,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalOptions {
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Vec<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Error-ratio cutoff, or `auto` for the training Nyquist.
    #[arg(long)]
    pub cutoff: Option<AutoValue>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub opts: EvalOptions,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub probe_res: Option<usize>,
    #[arg(long)]
    pub f_min: Option<f64>,
    /// Highest probe frequency, or `auto`.
    #[arg(long)]
    pub f_max: Option<AutoValue>,
    #[arg(long)]
    pub f_step: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Predictor steps per probe.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub levels_list: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_list: Vec<f64>,
    #[command(flatten)]
    pub train: TrainOptions,
    #[command(flatten)]
    pub eval: EvalOptions,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BandEnergyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rollout grid edge length.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Trajectory whose first snapshot starts the rollout.
    #[arg(long)]
    pub trajectory: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub band_width: Option<f64>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
