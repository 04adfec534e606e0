//! Closed-form probability of completion before deadline (PoCD) and expected
//! machine running time for Clone, Speculative-Restart and
//! Speculative-Resume, plus the pairwise PoCD comparator.
//!
//! Every public function takes an integer `r`; the `*_real` variants extend
//! the same expressions to real `r` for the optimizer's continuous
//! relaxation.

use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{truncated_mean, JobSpec, StrategyConfig, StrategyKind};
use crate::quadrature::adaptive_simpson;

/// Absolute tolerance for the normalised tail integral (its value is in (0, 1]).
const TAIL_QUAD_TOL: f64 = 1e-11;

/// Largest `r` scanned for the Clone / S-Resume crossover.
pub const CROSSOVER_SCAN_MAX: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PocdResult {
    pub value: f64,
    /// Probability that a single task misses the deadline.
    pub per_task_failure: f64,
}

impl PocdResult {
    fn from_failure(per_task_failure: f64, num_tasks: u32) -> Self {
        // (1 - f)^N without losing small f
        let value = (num_tasks as f64 * (-per_task_failure).ln_1p()).exp();
        Self {
            value,
            per_task_failure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostResult {
    /// VM-seconds summed over all attempts of all tasks.
    pub expected_machine_time: f64,
    pub expected_dollars: f64,
}

impl CostResult {
    fn new(machine_time: f64, price: f64) -> Self {
        Self {
            expected_machine_time: machine_time,
            expected_dollars: machine_time * price,
        }
    }
}

fn check_tau_est(job: &JobSpec, tau_est: f64) -> Result<()> {
    if !(tau_est >= 0.0 && tau_est < job.deadline) {
        return Err(Error::param(
            "tau_est",
            format!(
                "need 0 <= tau_est < D, got {tau_est} (D = {})",
                job.deadline
            ),
        ));
    }
    Ok(())
}

fn check_window(job: &JobSpec, tau_est: f64) -> Result<()> {
    if job.deadline - tau_est < job.dist.t_min() {
        return Err(Error::window(format!(
            "D - tau_est < t_min ({} - {} < {})",
            job.deadline,
            tau_est,
            job.dist.t_min()
        )));
    }
    Ok(())
}

fn check_phi(phi: f64) -> Result<()> {
    if !(0.0..1.0).contains(&phi) {
        return Err(Error::param(
            "phi_est",
            format!("need 0 <= phi < 1, got {phi}"),
        ));
    }
    Ok(())
}

fn check_deadline(job: &JobSpec) -> Result<()> {
    job.validate()
}

pub(crate) fn clone_failure_real(job: &JobSpec, r: f64) -> f64 {
    let p = &job.dist;
    (p.beta() * (r + 1.0) * (p.t_min() / job.deadline).ln()).exp()
}

pub(crate) fn restart_failure_real(job: &JobSpec, r: f64, tau_est: f64) -> f64 {
    let (t, b, d) = (job.dist.t_min(), job.dist.beta(), job.deadline);
    (b * (t / d).ln() + b * r * (t / (d - tau_est)).ln()).exp()
}

pub(crate) fn resume_failure_real(job: &JobSpec, r: f64, tau_est: f64, phi: f64) -> f64 {
    let (t, b, d) = (job.dist.t_min(), job.dist.beta(), job.deadline);
    (b * (t / d).ln() + b * (r + 1.0) * ((1.0 - phi) * t / (d - tau_est)).ln()).exp()
}

pub fn pocd_clone(job: &JobSpec, r: u32) -> Result<PocdResult> {
    check_deadline(job)?;
    Ok(PocdResult::from_failure(
        clone_failure_real(job, r as f64),
        job.num_tasks,
    ))
}

pub fn pocd_s_restart(job: &JobSpec, r: u32, tau_est: f64) -> Result<PocdResult> {
    check_deadline(job)?;
    check_tau_est(job, tau_est)?;
    if r > 0 {
        check_window(job, tau_est)?;
    }
    Ok(PocdResult::from_failure(
        restart_failure_real(job, r as f64, tau_est),
        job.num_tasks,
    ))
}

/// S-Resume always relaunches (r + 1 attempts), so the window check applies
/// for every `r`.
pub fn pocd_s_resume(job: &JobSpec, r: u32, tau_est: f64, phi_est: f64) -> Result<PocdResult> {
    check_deadline(job)?;
    check_tau_est(job, tau_est)?;
    check_phi(phi_est)?;
    check_window(job, tau_est)?;
    Ok(PocdResult::from_failure(
        resume_failure_real(job, r as f64, tau_est, phi_est),
        job.num_tasks,
    ))
}

fn check_tau_kill(r: u32, tau_est: f64, tau_kill: f64) -> Result<()> {
    if !(tau_kill.is_finite() && tau_kill >= 0.0) {
        return Err(Error::param(
            "tau_kill",
            format!("must be finite and >= 0, got {tau_kill}"),
        ));
    }
    if r > 0 && !(tau_kill > tau_est) {
        return Err(Error::param(
            "tau_kill",
            format!("need tau_kill > tau_est, got {tau_kill} <= {tau_est}"),
        ));
    }
    Ok(())
}

pub(crate) fn clone_machine_time_real(job: &JobSpec, r: f64, tau_kill: f64) -> Result<f64> {
    let (t, b) = (job.dist.t_min(), job.dist.beta());
    let k = b * (r + 1.0);
    if k <= 1.0 {
        return Err(Error::divergent("beta*(r+1) <= 1"));
    }
    Ok(job.num_tasks as f64 * (r * tau_kill + t + t / (k - 1.0)))
}

pub fn cost_clone(job: &JobSpec, r: u32, tau_kill: f64) -> Result<CostResult> {
    check_deadline(job)?;
    check_tau_kill(r, 0.0, tau_kill)?;
    let mt = clone_machine_time_real(job, r as f64, tau_kill)?;
    Ok(CostResult::new(mt, job.price))
}

/// `int_{D - tau_est}^inf (D / (w + tau_est))^beta (t_min / w)^(beta r) dw`.
///
/// With `u = 1/w` the range becomes `(0, 1/(D - tau_est)]` and the integrand
/// behaves like `u^(beta(r+1) - 2)` at the origin; a second change of
/// variables `u = w'^(1/c) / (D - tau_est)`, `c = beta(r+1) - 1`, absorbs that
/// power, leaving a bounded integrand on `[0, 1]`.
pub fn restart_tail_integral(job: &JobSpec, r: u32, tau_est: f64) -> Result<f64> {
    check_deadline(job)?;
    check_tau_est(job, tau_est)?;
    restart_tail_integral_real(job, r as f64, tau_est)
}

pub(crate) fn restart_tail_integral_real(job: &JobSpec, r: f64, tau_est: f64) -> Result<f64> {
    let (t, b, d) = (job.dist.t_min(), job.dist.beta(), job.deadline);
    let c = b * (r + 1.0) - 1.0;
    if c <= 0.0 {
        return Err(Error::QuadratureFailure {
            reason: "beta*(r+1) <= 1: tail integral diverges".into(),
        });
    }
    let a = d - tau_est;
    let scale = (b * d.ln() + b * r * t.ln() - c * a.ln() - c.ln()).exp();
    let z = tau_est / a;
    if z == 0.0 {
        return Ok(scale);
    }
    // Two equivalent forms of the normalised integral; each has an x^p
    // endpoint term, so pick the one with the larger p.
    let inv_c = 1.0 / c;
    let normalised = if inv_c >= c - 1.0 {
        adaptive_simpson(
            |w| (1.0 + z * w.powf(inv_c)).powf(-b),
            0.0,
            1.0,
            TAIL_QUAD_TOL,
        )?
    } else {
        // w = v^c
        adaptive_simpson(
            |v| c * v.powf(c - 1.0) * (1.0 + z * v).powf(-b),
            0.0,
            1.0,
            TAIL_QUAD_TOL,
        )?
    };
    Ok(scale * normalised)
}

/// `int_{t_min}^{a} (t_min / w)^s dw`, with the `s = 1` limit handled.
fn power_head(t: f64, a: f64, s: f64) -> f64 {
    let l = (t / a).ln(); // <= 0
    let e = s - 1.0;
    if e.abs() < 1e-12 {
        -t * l
    } else {
        -t * (e * l).exp_m1() / e
    }
}

/// Expected running time of the winning attempt after `tau_est` given the
/// original is a straggler: `E[min(T1 - tau_est, T2, .., T_{r+1}) | T1 > D]`.
pub(crate) fn restart_winner_mean_real(job: &JobSpec, r: f64, tau_est: f64) -> Result<f64> {
    let (t, b) = (job.dist.t_min(), job.dist.beta());
    let a = job.deadline - tau_est;
    Ok(t + power_head(t, a, b * r) + restart_tail_integral_real(job, r, tau_est)?)
}

pub(crate) fn restart_machine_time_real(
    job: &JobSpec,
    r: f64,
    tau_est: f64,
    tau_kill: f64,
) -> Result<f64> {
    let (t, b, d) = (job.dist.t_min(), job.dist.beta(), job.deadline);
    if b <= 1.0 {
        return Err(Error::divergent("beta <= 1"));
    }
    let below = truncated_mean(&job.dist, d)?;
    let p_straggle = (b * (t / d).ln()).exp();
    let above = if r == 0.0 {
        d * b / (b - 1.0)
    } else {
        tau_est + r * (tau_kill - tau_est) + restart_winner_mean_real(job, r, tau_est)?
    };
    Ok(job.num_tasks as f64 * (below * (1.0 - p_straggle) + above * p_straggle))
}

pub fn cost_s_restart(job: &JobSpec, r: u32, tau_est: f64, tau_kill: f64) -> Result<CostResult> {
    check_deadline(job)?;
    check_tau_est(job, tau_est)?;
    check_tau_kill(r, tau_est, tau_kill)?;
    let b = job.dist.beta();
    if b <= 1.0 {
        return Err(Error::divergent("beta <= 1"));
    }
    if r >= 1 && b * r as f64 <= 1.0 {
        return Err(Error::divergent("beta*r <= 1"));
    }
    if r > 0 {
        check_window(job, tau_est)?;
    }
    let mt = restart_machine_time_real(job, r as f64, tau_est, tau_kill)?;
    Ok(CostResult::new(mt, job.price))
}

pub(crate) fn resume_machine_time_real(
    job: &JobSpec,
    r: f64,
    tau_est: f64,
    tau_kill: f64,
    phi: f64,
) -> Result<f64> {
    let (t, b, d) = (job.dist.t_min(), job.dist.beta(), job.deadline);
    if b <= 1.0 {
        return Err(Error::divergent("beta <= 1"));
    }
    let k = b * (r + 1.0);
    if k <= 1.0 {
        return Err(Error::divergent("beta*(r+1) <= 1"));
    }
    let below = truncated_mean(&job.dist, d)?;
    let p_straggle = (b * (t / d).ln()).exp();
    let winner = t * (k * (1.0 - phi).ln()).exp() / (k - 1.0) + t;
    let above = tau_est + r * (tau_kill - tau_est) + winner;
    Ok(job.num_tasks as f64 * (below * (1.0 - p_straggle) + above * p_straggle))
}

pub fn cost_s_resume(
    job: &JobSpec,
    r: u32,
    tau_est: f64,
    tau_kill: f64,
    phi_est: f64,
) -> Result<CostResult> {
    check_deadline(job)?;
    check_tau_est(job, tau_est)?;
    check_tau_kill(r, tau_est, tau_kill)?;
    check_phi(phi_est)?;
    check_window(job, tau_est)?;
    let mt = resume_machine_time_real(job, r as f64, tau_est, tau_kill, phi_est)?;
    Ok(CostResult::new(mt, job.price))
}

/// PoCD of `strategy` at its own `r`. Hadoop-NS is Clone with no extras.
pub fn pocd(job: &JobSpec, strategy: &StrategyConfig) -> Result<PocdResult> {
    let s = strategy;
    match s.kind {
        StrategyKind::Clone => pocd_clone(job, s.r),
        StrategyKind::SRestart => pocd_s_restart(job, s.r, s.tau_est),
        StrategyKind::SResume => pocd_s_resume(job, s.r, s.tau_est, s.phi_est),
        StrategyKind::HadoopNs => pocd_clone(job, 0),
        other => Err(Error::param(
            "strategy",
            format!("{other} has no closed form"),
        )),
    }
}

pub fn cost(job: &JobSpec, strategy: &StrategyConfig) -> Result<CostResult> {
    let s = strategy;
    match s.kind {
        StrategyKind::Clone => cost_clone(job, s.r, s.tau_kill),
        StrategyKind::SRestart => cost_s_restart(job, s.r, s.tau_est, s.tau_kill),
        StrategyKind::SResume => cost_s_resume(job, s.r, s.tau_est, s.tau_kill, s.phi_est),
        StrategyKind::HadoopNs => cost_clone(job, 0, 0.0),
        other => Err(Error::param(
            "strategy",
            format!("{other} has no closed form"),
        )),
    }
}

/// PoCD at real `r`; preconditions are the caller's responsibility.
pub(crate) fn pocd_real(job: &JobSpec, s: &StrategyConfig, r: f64) -> f64 {
    let f = match s.kind {
        StrategyKind::SRestart => restart_failure_real(job, r, s.tau_est),
        StrategyKind::SResume => resume_failure_real(job, r, s.tau_est, s.phi_est),
        _ => clone_failure_real(job, r),
    };
    PocdResult::from_failure(f, job.num_tasks).value
}

pub(crate) fn machine_time_real(job: &JobSpec, s: &StrategyConfig, r: f64) -> Result<f64> {
    match s.kind {
        StrategyKind::SRestart => restart_machine_time_real(job, r, s.tau_est, s.tau_kill),
        StrategyKind::SResume => resume_machine_time_real(job, r, s.tau_est, s.tau_kill, s.phi_est),
        _ => clone_machine_time_real(job, r, s.tau_kill),
    }
}

/// Orders two PoCD results; exact ties in the PoCD value (e.g. both rounded to
/// 1.0) fall back to the per-task failure probabilities, which determine the
/// PoCD monotonically.
pub fn compare_pocd(a: &PocdResult, b: &PocdResult) -> Ordering {
    match a.value.partial_cmp(&b.value) {
        Some(Ordering::Equal) | None => b
            .per_task_failure
            .partial_cmp(&a.per_task_failure)
            .unwrap_or(Ordering::Equal),
        Some(o) => o,
    }
}

fn label(kind: StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Clone => "Clone",
        StrategyKind::SRestart => "S-Restart",
        StrategyKind::SResume => "S-Resume",
        StrategyKind::HadoopNs => "Hadoop-NS",
        StrategyKind::HadoopS => "Hadoop-S",
        StrategyKind::Mantri => "Mantri",
    }
}

/// Numerically observed relation between two strategies' PoCD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOrdering {
    pub first: StrategyKind,
    pub second: StrategyKind,
    pub relation: Ordering,
}

impl fmt::Display for PairOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Ordering::Greater => ">",
            Ordering::Less => "<",
            Ordering::Equal => "=",
        };
        write!(f, "{} {} {}", label(self.first), op, label(self.second))
    }
}

/// A comparison conclusion and whether its precondition held. Unmet
/// preconditions are recorded here instead of being raised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Conclusion {
    pub precondition_met: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub r: u32,
    pub pocd_clone: PocdResult,
    pub pocd_restart: PocdResult,
    pub pocd_resume: PocdResult,
    pub ordering: Vec<PairOrdering>,
    /// Clone beats S-Restart; requires `r >= 1`.
    pub clone_beats_restart: Conclusion,
    /// S-Resume beats S-Restart; requires `r >= 1` and `D - tau_est >= t_min (1 - phi)`.
    pub resume_beats_restart: Conclusion,
    /// `log_{(D - tau_est) / ((1 - phi) D)} ((1 - phi)^beta t_min^beta / (D - tau_est))`.
    pub clone_vs_resume_threshold: f64,
    /// Smallest `r` in `0..=CROSSOVER_SCAN_MAX` with Clone PoCD >= S-Resume PoCD.
    pub clone_vs_resume_crossover: Option<u32>,
}

impl ComparisonReport {
    pub fn ordering_strings(&self) -> Vec<String> {
        self.ordering.iter().map(|o| o.to_string()).collect()
    }
}

/// Closed-form threshold on `r` above which Clone is claimed to beat S-Resume.
pub fn clone_vs_resume_threshold(job: &JobSpec, tau_est: f64, phi_est: f64) -> f64 {
    let (t, b, d) = (job.dist.t_min(), job.dist.beta(), job.deadline);
    let d_bar = d - tau_est;
    let phi_bar = 1.0 - phi_est;
    (b * (phi_bar * t).ln() - d_bar.ln()) / (d_bar / (phi_bar * d)).ln()
}

pub fn compare_strategies(
    job: &JobSpec,
    r: u32,
    tau_est: f64,
    phi_est: f64,
) -> Result<ComparisonReport> {
    let clone = pocd_clone(job, r)?;
    let restart = pocd_s_restart(job, r, tau_est)?;
    let resume = pocd_s_resume(job, r, tau_est, phi_est)?;

    let pair = |first, a: &PocdResult, second, b: &PocdResult| PairOrdering {
        first,
        second,
        relation: compare_pocd(a, b),
    };
    let ordering = vec![
        pair(
            StrategyKind::Clone,
            &clone,
            StrategyKind::SRestart,
            &restart,
        ),
        pair(
            StrategyKind::SResume,
            &resume,
            StrategyKind::SRestart,
            &restart,
        ),
        pair(StrategyKind::Clone, &clone, StrategyKind::SResume, &resume),
    ];

    let t = job.dist.t_min();
    let clone_beats_restart = Conclusion {
        precondition_met: r >= 1,
        holds: ordering[0].relation == Ordering::Greater,
    };
    let resume_beats_restart = Conclusion {
        precondition_met: r >= 1 && job.deadline - tau_est >= t * (1.0 - phi_est),
        holds: ordering[1].relation == Ordering::Greater,
    };

    let mut crossover = None;
    for k in 0..=CROSSOVER_SCAN_MAX {
        let c = pocd_clone(job, k)?;
        let s = pocd_s_resume(job, k, tau_est, phi_est)?;
        if compare_pocd(&c, &s) != Ordering::Less {
            crossover = Some(k);
            break;
        }
    }

    Ok(ComparisonReport {
        r,
        pocd_clone: clone,
        pocd_restart: restart,
        pocd_resume: resume,
        ordering,
        clone_beats_restart,
        resume_beats_restart,
        clone_vs_resume_threshold: clone_vs_resume_threshold(job, tau_est, phi_est),
        clone_vs_resume_crossover: crossover,
    })
}
