use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "aoi-preempt",
    version,
    about = "Age-optimal sampling and preemption over a slotted preemptive server"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the average-age MDP by relative value iteration.
    Solve(SolveArgs),
    /// Solve the discounted MDP by value iteration.
    SolveDiscounted(DiscountedArgs),
    /// Average age of a given policy by every applicable method.
    Evaluate(EvaluateArgs),
    /// Best double-threshold policy and the drop-threshold-only baseline.
    Search(Common),
    /// Run one of the structural checks; exit 0 iff it holds.
    Check(CheckArgs),
    /// Recompute the published comparison table.
    Reproduce(ReproduceArgs),
    /// Monte Carlo simulation with a per-delivery trace.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct DistSource {
    /// Service-time pmf p_1..p_L as a comma-separated list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p: Option<Vec<f64>>,
    /// JSON file of the form {"p": [..]}.
    #[arg(long)]
    pub dist_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Common {
    #[command(flatten)]
    pub dist: DistSource,
    /// Age cap of the truncated state space [default: max(50, 20 L)].
    #[arg(long = "K")]
    pub k: Option<u32>,
    /// Stopping tolerance of the value iterations.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iterations: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here; standard output then only gets a summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DiscountedArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PolicySource {
    #[arg(long)]
    pub always_preempt: bool,
    /// Thresholds vth1 vth2.
    #[arg(long, num_args = 2, value_names = ["VTH1", "VTH2"])]
    pub double_threshold: Option<Vec<u32>>,
    /// Policy JSON as written by `solve` (its "policy" map) or a
    /// {"kind": ...} document.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulationOptions {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Slots per replication.
    #[arg(long, default_value_t = 100_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 20)]
    pub replications: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub policy: PolicySource,
    /// Add a Monte Carlo estimate.
    #[arg(long)]
    pub simulate: bool,
    #[command(flatten)]
    pub sim: SimulationOptions,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub policy: PolicySource,
    #[command(flatten)]
    pub sim: SimulationOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckName {
    Sufficient,
    Necessary,
    Nopreempt,
    Assumption1,
    Assumption2,
    ZeroWait,
    Threshold,
    Concavity,
    Classify,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(value_enum)]
    pub which: CheckName,
    #[command(flatten)]
    pub common: Common,
    /// Discount factor for the concavity check.
    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long = "K", default_value_t = 100)]
    pub k: u32,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
