//! Net utility `U(r) = log_b(R(r) - R_min) - theta * C * E(T)` and its
//! maximisation over the integer number of extra attempts `r`.
//!
//! [`optimize_r`] exploits the fact that `U` is concave past a
//! strategy-specific threshold `Gamma`: a backtracking gradient search on the
//! continuous relaxation handles `r >= ceil(Gamma)` and the few integers
//! below the threshold are enumerated. [`brute_force_r`] is the exhaustive
//! reference.

use serde::Serialize;

use crate::analytics::{self, machine_time_real, pocd_real};
use crate::error::{Error, Result};
use crate::model::{JobSpec, StrategyConfig, StrategyKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityConfig {
    pub theta: f64,
    /// PoCD floor; `None` uses the job's PoCD without speculation.
    pub r_min_pocd: Option<f64>,
    pub log_base: f64,
    /// Dollars per VM-second.
    pub price: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            theta: 1e-4,
            r_min_pocd: None,
            log_base: 10.0,
            price: 1.0,
        }
    }
}

impl UtilityConfig {
    pub fn new(theta: f64, price: f64) -> Self {
        Self {
            theta,
            price,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::param(
                "theta",
                format!("must be finite and >= 0, got {}", self.theta),
            ));
        }
        if let Some(r) = self.r_min_pocd {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::param(
                    "r_min_pocd",
                    format!("need 0 <= R_min < 1, got {r}"),
                ));
            }
        }
        if !(self.log_base > 1.0 && self.log_base.is_finite()) {
            return Err(Error::param(
                "log_base",
                format!("must be > 1, got {}", self.log_base),
            ));
        }
        if !(self.price >= 0.0 && self.price.is_finite()) {
            return Err(Error::param(
                "price",
                format!("must be finite and >= 0, got {}", self.price),
            ));
        }
        Ok(())
    }

    /// The PoCD floor actually used for `job`.
    pub fn resolve_r_min(&self, job: &JobSpec) -> Result<f64> {
        match self.r_min_pocd {
            Some(r) => Ok(r),
            None => Ok(analytics::pocd_clone(job, 0)?.value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerParams {
    /// Stop once the gradient magnitude falls to this value.
    pub eta: f64,
    /// Armijo sufficient-increase factor.
    pub alpha: f64,
    /// Step shrink factor during backtracking.
    pub xi: f64,
    pub r_cap: u32,
    pub max_iter: u32,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            eta: 1e-6,
            alpha: 0.3,
            xi: 0.5,
            r_cap: 200,
            max_iter: 1000,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::param("eta", "must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::param("alpha", "need 0 < alpha <= 0.5"));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::param("xi", "need 0 < xi < 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub r_opt: u32,
    /// `f64::NEG_INFINITY` when no `r` clears the PoCD floor.
    pub utility: f64,
    /// Concavity threshold; NaN when undefined for the configuration.
    pub gamma: f64,
    pub pocd_at_opt: f64,
    pub cost_at_opt: f64,
    pub r_min_pocd: f64,
}

fn check_analytic(strategy: &StrategyConfig) -> Result<()> {
    if strategy.kind.has_closed_form() {
        Ok(())
    } else {
        Err(Error::param(
            "strategy",
            format!("{} has no closed form to optimize", strategy.kind),
        ))
    }
}

fn utility_from(pocd: f64, r_min: f64, machine_time: f64, cfg: &UtilityConfig) -> f64 {
    if pocd <= r_min {
        return f64::NEG_INFINITY;
    }
    (pocd - r_min).ln() / cfg.log_base.ln() - cfg.theta * cfg.price * machine_time
}

/// Net utility at integer `r`, or `f64::NEG_INFINITY` when `R(r) <= R_min`.
pub fn net_utility(
    job: &JobSpec,
    strategy: &StrategyConfig,
    r: u32,
    cfg: &UtilityConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_analytic(strategy)?;
    let r_min = cfg.resolve_r_min(job)?;
    utility_at(job, strategy, r, r_min, cfg)
}

fn utility_at(
    job: &JobSpec,
    strategy: &StrategyConfig,
    r: u32,
    r_min: f64,
    cfg: &UtilityConfig,
) -> Result<f64> {
    let s = strategy.with_r(r);
    let pocd = analytics::pocd(job, &s)?.value;
    if pocd <= r_min {
        return Ok(f64::NEG_INFINITY);
    }
    let mt = analytics::cost(job, &s)?.expected_machine_time;
    Ok(utility_from(pocd, r_min, mt, cfg))
}

/// Concavity threshold: `U` is concave in `r` for `r > Gamma`.
pub fn gamma_threshold(job: &JobSpec, strategy: &StrategyConfig) -> Result<f64> {
    job.validate()?;
    let (t, b, d) = (job.dist.t_min(), job.dist.beta(), job.deadline);
    let n = job.num_tasks as f64;
    let log_base = |base: f64, what: &str| -> Result<f64> {
        if base >= 1.0 {
            return Err(Error::window(format!("{what} >= 1")));
        }
        Ok(base.ln())
    };
    // beta ln(D / t_min) - ln N = ln(D^beta / (N t_min^beta))
    let num = b * (d / t).ln() - n.ln();
    match strategy.kind {
        StrategyKind::Clone | StrategyKind::HadoopNs => Ok(-n.ln() / (b * (t / d).ln()) - 1.0),
        StrategyKind::SRestart => {
            let l = log_base(t / (d - strategy.tau_est), "t_min / (D - tau_est)")?;
            Ok(num / (b * l))
        }
        StrategyKind::SResume => {
            let l = log_base(
                (1.0 - strategy.phi_est) * t / (d - strategy.tau_est),
                "(1 - phi) t_min / (D - tau_est)",
            )?;
            Ok(num / (b * l) - 1.0)
        }
        other => Err(Error::param(
            "strategy",
            format!("{other} has no closed form"),
        )),
    }
}

struct Objective<'a> {
    job: &'a JobSpec,
    strategy: &'a StrategyConfig,
    cfg: &'a UtilityConfig,
    r_min: f64,
}

impl Objective<'_> {
    fn at(&self, r: u32) -> f64 {
        utility_at(self.job, self.strategy, r, self.r_min, self.cfg).unwrap_or(f64::NEG_INFINITY)
    }

    fn relaxed(&self, r: f64) -> f64 {
        let pocd = pocd_real(self.job, self.strategy, r);
        if pocd <= self.r_min {
            return f64::NEG_INFINITY;
        }
        match machine_time_real(self.job, self.strategy, r) {
            Ok(mt) if mt.is_finite() => utility_from(pocd, self.r_min, mt, self.cfg),
            _ => f64::NEG_INFINITY,
        }
    }

    fn result(&self, r_opt: u32, utility: f64, gamma: f64) -> OptimizationResult {
        let s = self.strategy.with_r(r_opt);
        let pocd_at_opt = analytics::pocd(self.job, &s).map_or(f64::NAN, |p| p.value);
        let cost_at_opt =
            analytics::cost(self.job, &s).map_or(f64::NAN, |c| c.expected_machine_time);
        OptimizationResult {
            r_opt,
            utility,
            gamma,
            pocd_at_opt,
            cost_at_opt,
            r_min_pocd: self.r_min,
        }
    }
}

/// Keeps the best `(r, U)` seen; ties go to the smaller `r`.
#[derive(Default)]
struct Best(Option<(u32, f64)>);

impl Best {
    fn offer(&mut self, r: u32, u: f64) {
        match self.0 {
            Some((br, bu)) if bu > u || (bu == u && br <= r) => {}
            _ => self.0 = Some((r, u)),
        }
    }
}

const FD_STEP: f64 = 1e-4;

fn gradient(obj: &Objective<'_>, x: f64, ux: f64, r_cap: f64) -> f64 {
    let lo = x - FD_STEP;
    let hi = x + FD_STEP;
    let u_lo = if lo >= 0.0 {
        obj.relaxed(lo)
    } else {
        f64::NEG_INFINITY
    };
    let u_hi = if hi <= r_cap {
        obj.relaxed(hi)
    } else {
        f64::NEG_INFINITY
    };
    match (u_lo.is_finite(), u_hi.is_finite()) {
        (true, true) => (u_hi - u_lo) / (2.0 * FD_STEP),
        (false, true) => (u_hi - ux) / FD_STEP,
        (true, false) => (ux - u_lo) / FD_STEP,
        (false, false) => 0.0,
    }
}

/// Backtracking gradient ascent on the continuous relaxation from `start`.
/// Returns the final point, or `None` when `U` is `-inf` on every integer
/// from `start` to the cap.
fn line_search(obj: &Objective<'_>, start: u32, params: &OptimizerParams) -> Option<f64> {
    let cap = params.r_cap as f64;
    let mut r0 = start;
    while obj.relaxed(r0 as f64) == f64::NEG_INFINITY {
        if r0 >= params.r_cap {
            return None;
        }
        r0 += 1;
    }
    let mut x = r0 as f64;
    let mut ux = obj.relaxed(x);
    for _ in 0..params.max_iter {
        let g = gradient(obj, x, ux, cap);
        if !g.is_finite() || g.abs() <= params.eta {
            break;
        }
        // the first trial step can span the whole window, so flat regions
        // (small theta) are crossed in a handful of iterations
        let mut eps = (cap / g.abs()).max(1.0);
        let mut moved = false;
        while eps * g.abs() > 1e-12 {
            let cand = x + eps * g;
            if (0.0..=cap).contains(&cand) {
                let uc = obj.relaxed(cand);
                if uc.is_finite() && uc >= ux + params.alpha * eps * g * g {
                    x = cand;
                    ux = uc;
                    moved = true;
                    break;
                }
            }
            eps *= params.xi;
        }
        if !moved {
            break;
        }
    }
    Some(x)
}

/// Maximises `U(r)` over `0..=params.r_cap`.
///
/// Utilities that cannot be evaluated at some `r` (unmet preconditions,
/// divergent moments) count as `-inf` there. Fails with
/// [`Error::SearchCapReached`] when the maximiser sits at `r_cap` with `U`
/// still increasing.
pub fn optimize_r(
    job: &JobSpec,
    strategy: &StrategyConfig,
    cfg: &UtilityConfig,
    params: &OptimizerParams,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    params.validate()?;
    check_analytic(strategy)?;
    job.validate()?;
    let gamma = gamma_threshold(job, strategy)?;
    let obj = Objective {
        job,
        strategy,
        cfg,
        r_min: cfg.resolve_r_min(job)?,
    };

    let cap = params.r_cap;
    let start = if gamma.is_finite() && gamma > 0.0 {
        (gamma.ceil() as u64).min(cap as u64) as u32
    } else {
        0
    };
    let mut best = Best::default();

    if let Some(x) = line_search(&obj, start, params) {
        let lo = (x.floor() as u32).clamp(start, cap);
        let hi = (x.ceil() as u32).clamp(start, cap);
        let (mut r, mut u) = (lo, obj.at(lo));
        let u_hi = obj.at(hi);
        if u_hi > u {
            (r, u) = (hi, u_hi);
        }
        // integer polish; U is concave on r >= ceil(Gamma), so a local
        // maximum there is the maximum over that range
        while r < cap {
            let next = obj.at(r + 1);
            if next > u {
                (r, u) = (r + 1, next);
            } else {
                break;
            }
        }
        while r > start {
            let prev = obj.at(r - 1);
            if prev >= u && prev.is_finite() {
                (r, u) = (r - 1, prev);
            } else {
                break;
            }
        }
        best.offer(r, u);
    }

    for r in 0..start {
        best.offer(r, obj.at(r));
    }

    let (r_opt, utility) = best.0.unwrap_or((0, f64::NEG_INFINITY));
    if utility == f64::NEG_INFINITY {
        return Ok(obj.result(0, f64::NEG_INFINITY, gamma));
    }
    if r_opt == cap && cap > 0 && obj.at(cap - 1) < utility {
        return Err(Error::SearchCapReached { r_cap: cap });
    }
    Ok(obj.result(r_opt, utility, gamma))
}

/// Exhaustive argmax of `U(r)` over `0..=r_max`, ties to the smaller `r`.
pub fn brute_force_r(
    job: &JobSpec,
    strategy: &StrategyConfig,
    cfg: &UtilityConfig,
    r_max: u32,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    check_analytic(strategy)?;
    job.validate()?;
    let obj = Objective {
        job,
        strategy,
        cfg,
        r_min: cfg.resolve_r_min(job)?,
    };
    let mut best = Best::default();
    for r in 0..=r_max {
        best.offer(r, obj.at(r));
    }
    let (r_opt, utility) = best.0.unwrap_or((0, f64::NEG_INFINITY));
    let r_opt = if utility == f64::NEG_INFINITY {
        0
    } else {
        r_opt
    };
    let gamma = gamma_threshold(job, strategy).unwrap_or(f64::NAN);
    Ok(obj.result(r_opt, utility, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> (JobSpec, StrategyConfig, UtilityConfig) {
        (
            JobSpec::simple(1.0, 1.5, 2.0, 10).unwrap(),
            StrategyConfig::clone_attempts(0, 1.0),
            UtilityConfig::new(1e-4, 1.0),
        )
    }

    #[test]
    fn worked_example_utility() {
        let (job, s, cfg) = worked();
        assert!((cfg.resolve_r_min(&job).unwrap() - 0.012744612032463866).abs() < 1e-15);
        let u2 = net_utility(&job, &s, 2, &cfg).unwrap();
        assert!((u2 - -0.20837515523138056).abs() < 1e-12, "{u2}");
        assert_eq!(net_utility(&job, &s, 0, &cfg).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn worked_example_optimum() {
        let (job, s, cfg) = worked();
        let bf = brute_force_r(&job, &s, &cfg, 50).unwrap();
        assert_eq!(bf.r_opt, 7);
        let opt = optimize_r(&job, &s, &cfg, &OptimizerParams::default()).unwrap();
        assert_eq!(opt.r_opt, 7);
        assert_eq!(opt.utility, net_utility(&job, &s, 7, &cfg).unwrap());
        assert!((opt.utility - -0.014736).abs() < 1e-6);
    }

    #[test]
    fn gamma_examples() {
        let (job, s, _) = worked();
        let g = gamma_threshold(&job, &s).unwrap();
        assert!((g - 1.2146187299249087).abs() < 1e-12);
        let single = JobSpec::simple(1.0, 1.5, 2.0, 1).unwrap();
        assert_eq!(gamma_threshold(&single, &s).unwrap(), -1.0);

        let job = JobSpec::simple(1.0, 1.7, 3.0, 12).unwrap();
        let restart = gamma_threshold(&job, &StrategyConfig::s_restart(0, 0.0, 1.0)).unwrap();
        let resume = gamma_threshold(&job, &StrategyConfig::s_resume(0, 0.0, 1.0, 0.0)).unwrap();
        assert!((resume - (restart - 1.0)).abs() < 1e-12);
        assert!(matches!(
            gamma_threshold(&job, &StrategyConfig::s_restart(0, 2.0, 2.5)),
            Err(Error::InvalidWindow { .. })
        ));
    }

    #[test]
    fn large_theta_picks_first_feasible_r() {
        let (job, s, mut cfg) = worked();
        cfg.theta = 10.0;
        let opt = optimize_r(&job, &s, &cfg, &OptimizerParams::default()).unwrap();
        assert_eq!(opt.r_opt, 1);
    }

    #[test]
    fn singleton_and_infeasible_domains() {
        let (job, s, mut cfg) = worked();
        assert_eq!(brute_force_r(&job, &s, &cfg, 0).unwrap().r_opt, 0);
        cfg.r_min_pocd = Some(0.999_999_999_999);
        let bf = brute_force_r(&job, &s, &cfg, 20).unwrap();
        assert_eq!((bf.r_opt, bf.utility), (0, f64::NEG_INFINITY));
    }

    #[test]
    fn zero_theta_hits_cap() {
        let job = JobSpec::simple(1.0, 1.1, 1.2, 100).unwrap();
        let s = StrategyConfig::clone_attempts(0, 0.5);
        let cfg = UtilityConfig::new(0.0, 1.0);
        let params = OptimizerParams {
            r_cap: 10,
            ..OptimizerParams::default()
        };
        assert_eq!(
            optimize_r(&job, &s, &cfg, &params),
            Err(Error::SearchCapReached { r_cap: 10 })
        );
    }

    #[test]
    fn rejects_baselines_and_bad_config() {
        let (job, _, cfg) = worked();
        let s = StrategyConfig::baseline(StrategyKind::Mantri);
        assert!(optimize_r(&job, &s, &cfg, &OptimizerParams::default()).is_err());
        let bad = UtilityConfig {
            log_base: 1.0,
            ..cfg
        };
        assert!(net_utility(&job, &StrategyConfig::clone_attempts(1, 1.0), 1, &bad).is_err());
    }
}
