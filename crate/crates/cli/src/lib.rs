//! Batch experiments over the `popsim` library.
//!
//! Each subcommand is a pure function of its flags and seed base: reruns
//! produce byte-identical output, whatever `--jobs` is.

pub mod commands;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::execute;
pub use output::Format;

#[derive(Debug, Parser)]
#[command(name = "popsim", version, about = "Population protocol experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run trials of a protocol and emit one row per trial.
    Run(RunArgs),
    /// Measure the first step at which some influencer set exceeds a threshold.
    Influencer(InfluencerArgs),
    /// Measure steps until fewer than f(n) agents remain in the initial state.
    Coupon(CouponArgs),
    /// Exhaustive analysis of a tiny population.
    Exact(ExactArgs),
    /// Export the layered causality graph and backward sets of a recorded log.
    ExportGraph(ExportGraphArgs),
    /// Write a uniformly random interaction log.
    Log(LogArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    /// Catalog protocol: pairwise-elimination, leave-init or one-way-epidemic.
    #[arg(long)]
    pub protocol: Option<String>,
    /// JSON protocol definition file.
    #[arg(long, conflicts_with = "protocol")]
    pub protocol_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Population size; repeat for a sweep.
    #[arg(long = "n", required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    /// Seed base; trial i uses trial_seed(seed, i).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step budget per trial; defaults to 64 n ceil(ln n).
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Threshold expression, e.g. n^(2/3), log(n), 5.
    #[arg(long, default_value = "n^(2/3)")]
    pub threshold: String,
    /// Worker threads for independent trials.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopRule {
    /// `stabilized` for protocols with leader outputs, `silent` otherwise.
    Auto,
    Stabilized,
    Silent,
    TMin,
    InitBelow,
    /// Run the whole step budget.
    Budget,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long, value_enum, default_value_t = StopRule::Auto)]
    pub stop: StopRule,
    /// Track influencer sets and report t_min (memory n²/8 bytes per trial).
    #[arg(long)]
    pub influencers: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InfluencerArgs {
    /// Protocol driving the run; influencer sets depend only on the schedule.
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Also report the first passage of this single agent.
    #[arg(long)]
    pub watch: Option<usize>,
    /// Per-n summary table; stderr when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Influencer-size time series of the first trial at the first n.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CouponArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Per-n summary table; stderr when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long = "n", required = true)]
    pub n: Vec<usize>,
    /// Include every reachable configuration and its safety verdict.
    #[arg(long)]
    pub dump: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Edges,
    Dot,
}

#[derive(Debug, Clone, Args)]
pub struct ExportGraphArgs {
    /// Interaction log in `popsim-log 1` text form.
    #[arg(long)]
    pub log: PathBuf,
    /// Agent v of the query (v, t).
    #[arg(long)]
    pub agent: usize,
    /// Step t of the query; defaults to the log length.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long, value_enum, default_value_t = GraphFormat::Edges)]
    pub format: GraphFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LogArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
