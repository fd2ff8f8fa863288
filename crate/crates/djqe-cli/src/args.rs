//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "djqe",
    version,
    about = "Off-policy value estimation for continuous actions via adaptive discretization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and print its oracle values.
    Generate(GenerateArgs),
    /// Estimate a target policy's value from a dataset CSV.
    Evaluate(EvaluateArgs),
    /// Replicated bias/sd/MSE comparison of estimators on a scenario.
    Benchmark(BenchmarkArgs),
    /// Calibrate a simulator to a dataset and emit simulated data.
    Calibrate(CalibrateArgs),
}

/// Evaluation settings shared by `evaluate`, `benchmark`, and `calibrate`.
/// Precedence: flag > config file > built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct SharedEvalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = false)]
    pub config: Option<PathBuf>,

    /// Action grid resolution (default: ceil(n/10), at least 2).
    #[arg(long)]
    pub m: Option<usize>,

    /// Fixed partition penalty (skips cross-validated selection).
    #[arg(long, conflicts_with = "gamma_grid")]
    pub gamma: Option<f64>,

    /// Comma-separated penalty candidates for cross-validated selection.
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,

    /// Number of cross-fitting folds.
    #[arg(long)]
    pub folds: Option<usize>,

    /// Master seed; all randomness derives deterministically from it.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Partition search: pelt or exact-dp.
    #[arg(long)]
    pub partitioner: Option<String>,

    /// Doubly-robust summand: standard-dr or paper-literal.
    #[arg(long)]
    pub estimator_variant: Option<String>,

    /// Lower clip for propensity predictions, in (0, 0.5).
    #[arg(long)]
    pub clip_eps: Option<f64>,

    /// Hidden layers in the MLP regressor.
    #[arg(long)]
    pub mlp_depth: Option<usize>,

    /// Hidden width of the MLP regressor.
    #[arg(long)]
    pub mlp_width: Option<usize>,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario: s1, s2, s3, s4, or toy.
    #[arg(long)]
    pub scenario: String,

    /// Number of rows.
    #[arg(long)]
    pub n: usize,

    /// Feature dimension (default: the scenario's minimum).
    #[arg(long)]
    pub p: Option<usize>,

    /// Reward noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,

    /// Generation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Input dataset CSV (x_1..x_p,a,y).
    #[arg(long)]
    pub data: PathBuf,

    /// Target policy: s1-optimal, s2-optimal, s3-optimal, s4-optimal,
    /// toy-optimal, toy-identity, constant:<v>, or a path to a
    /// single-column CSV of actions.
    #[arg(long)]
    pub policy: String,

    /// Write the full JSON report here (otherwise printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Dump the full-data Bellman recursion as CSV (v,bell,tau).
    #[arg(long)]
    pub dump_bellman: Option<PathBuf>,

    /// Dump the full-data interval cost map as CSV (lo,hi,cost,n_samples).
    #[arg(long)]
    pub dump_costs: Option<PathBuf>,

    /// Compute every interval cost up front instead of lazily.
    #[arg(long)]
    pub eager_costs: bool,

    #[command(flatten)]
    pub shared: SharedEvalArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Scenario: s1, s2, s3, s4, or toy.
    #[arg(long)]
    pub scenario: String,

    /// Comma-separated sample sizes, one benchmark block per entry.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,

    /// Feature dimension (default: the scenario's minimum).
    #[arg(long)]
    pub p: Option<usize>,

    /// Reward noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,

    /// Replications per (scenario, n) cell.
    #[arg(long)]
    pub reps: usize,

    /// Comma-separated methods: djqe, kernel-dr.
    #[arg(long, value_delimiter = ',', default_values_t = vec![String::from("djqe"), String::from("kernel-dr")])]
    pub methods: Vec<String>,

    /// Baseline kernel: gaussian, epanechnikov, or boxcar.
    #[arg(long)]
    pub kernel: Option<String>,

    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub shared: SharedEvalArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Input dataset CSV (x_1..x_p,a,y).
    #[arg(long)]
    pub data: PathBuf,

    /// Prefix for output files: <prefix>-simulated.csv,
    /// <prefix>-pi-star.csv, <prefix>-calibration.json.
    #[arg(long)]
    pub out_prefix: String,

    /// Simulated dataset size (default: the source size).
    #[arg(long)]
    pub sim_n: Option<usize>,

    #[command(flatten)]
    pub shared: SharedEvalArgs,
}
