//! Deadline-aware straggler mitigation for single-wave MapReduce jobs.
//!
//! Task attempts are modelled as Pareto-distributed. For three mitigation
//! strategies (Clone, Speculative-Restart, Speculative-Resume) the crate
//! provides closed-form probability of completion before deadline (PoCD) and
//! expected machine time ([`analytics`]), a net-utility optimizer over the
//! number of extra attempts ([`optimizer`]), a Monte Carlo simulator that
//! also covers the Hadoop and Mantri baselines ([`simulator`]), and CSV
//! trace handling ([`trace`]).

// `!(x > 0.0)` style guards deliberately reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod quadrature;
pub mod simulator;
pub mod trace;

pub use analytics::{
    compare_strategies, cost, cost_clone, cost_s_restart, cost_s_resume, pocd, pocd_clone,
    pocd_s_restart, pocd_s_resume, restart_tail_integral, ComparisonReport, CostResult, PocdResult,
};
pub use error::{Error, Result};
pub use model::{JobSpec, ParetoParams, SampleStream, StrategyConfig, StrategyKind};
pub use optimizer::{
    brute_force_r, gamma_threshold, net_utility, optimize_r, OptimizationResult, OptimizerParams,
    UtilityConfig,
};
pub use simulator::{
    baseline_hadoop_s, baseline_mantri, estimate_completion, hadoop_estimate, resume_offset,
    run_trials, simulate_job, simulate_job_traced, AttemptRecord, Detection, JobOutcome, JobTrace,
    ResumeWork, SimConfig, SimReport, TaskOutcome,
};
pub use trace::{
    fit_pareto, generate_workload, load_prices, load_results, load_trace, price_at, write_results,
    write_trace, PriceRecord, ResultRow, TraceError, TraceRecord, WorkloadSpec,
};
