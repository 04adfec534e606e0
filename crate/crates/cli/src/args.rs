use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "chronos",
    version,
    about = "PoCD, cost and speculation planning for deadline-bound MapReduce jobs",
    propagate_version = true
)]
pub struct Cli {
    /// Worker threads for simulations, sweeps and trace runs (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,

    /// Write the table to this file instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form probability of completing before the deadline.
    Pocd(PointArgs),
    /// Closed-form expected machine time and dollar cost.
    Cost(PointArgs),
    /// Net utility at a given number of extra attempts.
    Utility(UtilityArgs),
    /// Utility-maximising number of extra attempts.
    Optimize(OptimizeArgs),
    /// Monte Carlo simulation next to the closed forms.
    Simulate(SimulateArgs),
    /// PoCD ordering of the three strategies at a common r.
    Compare(CompareArgs),
    /// Optimize over a grid of one parameter; long-form output.
    Sweep(SweepArgs),
    /// Optimize (and optionally simulate) every job of a trace file.
    TraceRun(TraceRunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Clone,
    SRestart,
    SResume,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    HadoopNs,
    HadoopS,
    Mantri,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectionArg {
    /// Flag exactly the attempts that would miss the deadline.
    Oracle,
    /// Progress-based estimate that accounts for startup delay.
    Estimator,
    /// Progress-based estimate that ignores startup delay.
    Hadoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    Theta,
    Beta,
    TauEst,
    TauKill,
    Deadline,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::Theta => "theta",
            SweepVar::Beta => "beta",
            SweepVar::TauEst => "tau-est",
            SweepVar::TauKill => "tau-kill",
            SweepVar::Deadline => "deadline",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct JobArgs {
    /// Minimum task execution time (Pareto scale), seconds.
    #[arg(long, value_parser = positive)]
    pub tmin: f64,

    /// Pareto tail index (required unless swept).
    #[arg(long, value_parser = positive)]
    pub beta: Option<f64>,

    /// Job deadline, seconds from job start (required unless swept or given
    /// as --deadline-multiple).
    #[arg(long, value_parser = positive)]
    pub deadline: Option<f64>,

    /// Deadline as a multiple of the mean task time (needs beta > 1).
    #[arg(long, value_parser = at_least_one, conflicts_with = "deadline")]
    pub deadline_multiple: Option<f64>,

    /// Number of tasks in the job.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub ntasks: u32,
}

#[derive(Debug, Clone, Args)]
pub struct KnobArgs {
    /// Straggler detection time [default: 0.3 * tmin].
    #[arg(long, value_parser = non_negative)]
    pub tau_est: Option<f64>,

    /// Prune-to-one time [default: 0.8 * tmin].
    #[arg(long, value_parser = non_negative)]
    pub tau_kill: Option<f64>,

    /// Mean progress of stragglers at tau-est [default: tau_est*beta/((beta+1)*deadline)].
    #[arg(long, value_parser = fraction)]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct UtilArgs {
    /// PoCD-versus-cost tradeoff factor.
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative)]
    pub theta: f64,

    /// PoCD floor of the utility [default: PoCD without speculation].
    #[arg(long, value_parser = fraction)]
    pub rmin: Option<f64>,

    /// Price per VM-second.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub price: f64,

    /// Base of the utility logarithm.
    #[arg(long, default_value_t = 10.0, value_parser = log_base)]
    pub log_base: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Largest r the optimizer will consider.
    #[arg(long, default_value_t = 200)]
    pub r_cap: u32,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Monte Carlo trials (whole jobs).
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,

    /// Master seed.
    #[arg(long, env = "CHRONOS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = DetectionArg::Oracle)]
    pub detection: DetectionArg,

    /// Time from attempt launch to its first progress report.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub jvm_delay: f64,

    /// Let resumed attempts run shorter than tmin.
    #[arg(long)]
    pub no_winner_floor: bool,

    /// Resume from the --phi fraction instead of each straggler's measured progress.
    #[arg(long)]
    pub fixed_phi: bool,

    /// Hadoop-S speculation check period.
    #[arg(long, default_value_t = 10.0, value_parser = positive)]
    pub hadoop_s_period: f64,

    /// Mantri check period.
    #[arg(long, default_value_t = 10.0, value_parser = positive)]
    pub mantri_period: f64,

    /// Mantri launches when remaining time exceeds the typical task time by this much.
    #[arg(long, default_value_t = 30.0, value_parser = non_negative)]
    pub mantri_gap: f64,

    /// Mantri extra attempts per task.
    #[arg(long, default_value_t = 3)]
    pub mantri_max_extra: u32,
}

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,

    /// Extra attempts per task.
    /// Extra attempts per task.
    #[arg(long)]
    pub r: u32,

    #[command(flatten)]
    pub job: JobArgs,

    #[command(flatten)]
    pub knobs: KnobArgs,

    /// Price per VM-second (cost only).
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub price: f64,
}

#[derive(Debug, Clone, Args)]
pub struct UtilityArgs {
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,

    /// Extra attempts per task.
    #[arg(long)]
    pub r: u32,

    #[command(flatten)]
    pub job: JobArgs,

    #[command(flatten)]
    pub knobs: KnobArgs,

    #[command(flatten)]
    pub util: UtilArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::All)]
    pub strategy: StrategyArg,

    #[command(flatten)]
    pub job: JobArgs,

    #[command(flatten)]
    pub knobs: KnobArgs,

    #[command(flatten)]
    pub util: UtilArgs,

    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::All)]
    pub strategy: StrategyArg,

    /// Extra attempts per task.
    #[arg(long)]
    pub r: u32,

    /// Also simulate these baselines.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub baselines: Vec<BaselineArg>,

    #[command(flatten)]
    pub job: JobArgs,

    #[command(flatten)]
    pub knobs: KnobArgs,

    #[command(flatten)]
    pub util: UtilArgs,

    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Extra attempts per task.
    #[arg(long)]
    pub r: u32,

    #[command(flatten)]
    pub job: JobArgs,

    #[command(flatten)]
    pub knobs: KnobArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub sweep: SweepVar,

    #[arg(long)]
    pub from: f64,

    #[arg(long)]
    pub to: f64,

    /// Number of intervals; 0 gives the single point --from.
    #[arg(long, default_value_t = 10)]
    pub steps: u32,

    /// Space the grid geometrically.
    #[arg(long)]
    pub log: bool,

    #[arg(long, value_enum, default_value_t = StrategyArg::All)]
    pub strategy: StrategyArg,

    #[command(flatten)]
    pub job: JobArgs,

    #[command(flatten)]
    pub knobs: KnobArgs,

    #[command(flatten)]
    pub util: UtilArgs,

    #[command(flatten)]
    pub search: SearchArgs,

    /// Also simulate each optimum with this many trials.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,

    #[arg(long, env = "CHRONOS_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TraceRunArgs {
    /// Job trace CSV.
    #[arg(long)]
    pub trace: PathBuf,

    /// Spot-price history CSV; overrides the trace's price column.
    #[arg(long)]
    pub prices: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = StrategyArg::All)]
    pub strategy: StrategyArg,

    /// Detection time as a multiple of each job's tmin.
    #[arg(long, default_value_t = 0.3, value_parser = non_negative)]
    pub tau_est_frac: f64,

    /// Prune time as a multiple of each job's tmin.
    #[arg(long, default_value_t = 0.8, value_parser = non_negative)]
    pub tau_kill_frac: f64,

    /// Straggler progress at tau-est [default: per-job conditional mean].
    #[arg(long, value_parser = fraction)]
    pub phi: Option<f64>,

    #[arg(long, default_value_t = 1e-4, value_parser = non_negative)]
    pub theta: f64,

    #[arg(long, value_parser = fraction)]
    pub rmin: Option<f64>,

    #[arg(long, default_value_t = 10.0, value_parser = log_base)]
    pub log_base: f64,

    #[command(flatten)]
    pub search: SearchArgs,

    /// Also simulate each optimum with this many trials.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,

    #[arg(long, env = "CHRONOS_SEED", default_value_t = 0)]
    pub seed: u64,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {v}"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be >= 0, got {v}"))
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must be in [0, 1), got {v}"))
    }
}

fn at_least_one(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 1.0 {
        Ok(v)
    } else {
        Err(format!("must be >= 1, got {v}"))
    }
}

fn log_base(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 1.0 {
        Ok(v)
    } else {
        Err(format!("must be > 1, got {v}"))
    }
}
