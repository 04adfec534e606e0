//! Shared fixtures for the benchmarks.

use chronos_core::{JobSpec, SimConfig, StrategyConfig, UtilityConfig};

/// Ten tasks, `t_min = 1`, `beta = 1.5`, deadline 2.
pub fn small_job() -> JobSpec {
    JobSpec::simple(1.0, 1.5, 2.0, 10).expect("valid job")
}

/// A hundred tasks with a heavier tail and a looser deadline.
pub fn large_job() -> JobSpec {
    JobSpec::simple(10.0, 1.2, 40.0, 100).expect("valid job")
}

/// The three mitigation strategies at `r` with detection at `0.3 t_min` and
/// kill at `0.8 t_min`.
pub fn strategies(job: &JobSpec, r: u32) -> [StrategyConfig; 3] {
    let t = job.dist.t_min();
    let b = job.dist.beta();
    let (tau, tk) = (0.3 * t, 0.8 * t);
    let phi = tau * b / ((b + 1.0) * job.deadline);
    [
        StrategyConfig::clone_attempts(r, tk),
        StrategyConfig::s_restart(r, tau, tk),
        StrategyConfig::s_resume(r, tau, tk, phi),
    ]
}

pub fn utility() -> UtilityConfig {
    UtilityConfig::new(1e-4, 1.0)
}

pub fn sim(trials: u64) -> SimConfig {
    SimConfig {
        trials,
        seed: 1,
        ..SimConfig::default()
    }
}
