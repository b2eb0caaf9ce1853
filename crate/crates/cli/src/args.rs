use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fedgdp", version, about = "Gaussian-DP accounting for noisy federated learning")]
pub struct Cli {
    /// Run data-parallel loops sequentially or on the thread pool.
    #[arg(long, value_enum, global = true, default_value_t = ExecArg::Parallel)]
    pub exec: ExecArg,

    /// Also write a run manifest to this path.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecArg {
    Sequential,
    Parallel,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Worst-privacy GDP bound with (epsilon, delta) and Renyi conversions.
    Account(AccountArgs),
    /// Noise level meeting a GDP or (epsilon, delta) target.
    Calibrate(CalibrateArgs),
    /// Accounting over a grid of T, K, m, sigma and alpha.
    Sweep(SweepArgs),
    /// Adjacent-dataset sensitivity simulation.
    Simulate(SimulateArgs),
    /// Gaussian trade-off curve on a uniform alpha grid.
    Tradeoff(TradeoffArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Fedavg,
    Fedprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleArg {
    Constant,
    Cyclic,
    Stagewise,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Table,
}

/// Training configuration shared by every accounting command. Grid-valued
/// flags take comma-separated lists in `sweep` and a single value elsewhere.
#[derive(Debug, Clone, Default, Args)]
pub struct FlArgs {
    /// JSON file with any of these settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Base learning rate.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Smoothness constant.
    #[arg(long = "L")]
    pub smoothness: Option<f64>,
    /// Clipping norm.
    #[arg(long = "V")]
    pub clip_norm: Option<f64>,
    /// Local steps per round.
    #[arg(long = "K", value_delimiter = ',')]
    pub local_steps: Vec<usize>,
    /// Communication rounds.
    #[arg(long = "T", value_delimiter = ',')]
    pub rounds: Vec<usize>,
    /// Number of clients.
    #[arg(long = "m", value_delimiter = ',')]
    pub clients: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sigma: Vec<f64>,
    /// FedProx proximal coefficient.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Cyclic constant c; derived from K when absent.
    #[arg(long)]
    pub c: Option<f64>,
    /// Continuous-decay constant z; max over rounds when absent.
    #[arg(long)]
    pub z: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    #[command(flatten)]
    pub fl: FlArgs,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub fl: FlArgs,
    #[arg(long, requires = "delta", conflicts_with = "target_mu")]
    pub epsilon: Option<f64>,
    #[arg(long, requires = "epsilon")]
    pub delta: Option<f64>,
    #[arg(long)]
    pub target_mu: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub fl: FlArgs,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub fl: FlArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to $FEDGDP_OUT_DIR, then `fedgdp-out`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_per_client: Option<usize>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub dirichlet_beta: Option<f64>,
    /// Random gradient pairs per dataset for the smoothness estimate.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Control run with identical datasets.
    #[arg(long)]
    pub identical: bool,
    /// Record the pre-noise gap as an extra trace column.
    #[arg(long)]
    pub record_pre_noise: bool,
}

#[derive(Debug, Args)]
pub struct TradeoffArgs {
    /// GDP parameter.
    #[arg(long)]
    pub mu: f64,
    /// Number of alpha grid points, at least 2.
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    /// Add Monte-Carlo columns from this many samples per distribution.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
