//! Execution-time model: Pareto attempt durations, job and strategy
//! descriptions, reproducible sample streams, and the two probability
//! identities (expected minimum of iid attempts, conditional tail) the rest of
//! the crate builds on.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pareto distribution of a single attempt's execution time.
///
/// `P(T > t) = (t_min / t)^beta` for `t >= t_min`, and 1 below the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoParams {
    t_min: f64,
    beta: f64,
}

impl ParetoParams {
    pub fn new(t_min: f64, beta: f64) -> Result<Self> {
        if !(t_min.is_finite() && t_min > 0.0) {
            return Err(Error::param(
                "t_min",
                format!("must be finite and > 0, got {t_min}"),
            ));
        }
        if !(beta > 0.0) || beta.is_nan() {
            return Err(Error::param("beta", format!("must be > 0, got {beta}")));
        }
        Ok(Self { t_min, beta })
    }

    #[inline]
    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn survival(&self, t: f64) -> f64 {
        pareto_survival(t, self)
    }

    /// Unconditional mean, `None` when `beta <= 1`.
    pub fn mean(&self) -> Option<f64> {
        (self.beta > 1.0).then(|| self.t_min * self.beta / (self.beta - 1.0))
    }

    /// Inverse of the survival function: the duration whose survival is `u`.
    #[inline]
    pub fn from_survival(&self, u: f64) -> f64 {
        self.t_min * u.powf(-1.0 / self.beta)
    }

    /// Same tail index, support starting at `floor`.
    pub fn with_floor(&self, floor: f64) -> Result<Self> {
        if floor < self.t_min {
            return Err(Error::InvalidFloor {
                floor,
                t_min: self.t_min,
            });
        }
        Self::new(floor, self.beta)
    }
}

/// `P(T > t)` for `T ~ Pareto(t_min, beta)`.
#[inline]
pub fn pareto_survival(t: f64, p: &ParetoParams) -> f64 {
    if t < p.t_min {
        1.0
    } else {
        (p.t_min / t).powf(p.beta)
    }
}

/// Uniform draw on `(0, 1]`, so the inverse CDF never sees zero.
#[inline]
pub fn open_closed_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Inverse-CDF Pareto sample.
#[inline]
pub fn pareto_sample<R: Rng + ?Sized>(rng: &mut R, p: &ParetoParams) -> f64 {
    p.from_survival(open_closed_unit(rng))
}

/// Sample of `T | T > floor`, which is again Pareto with support starting at
/// `floor` and the same tail index.
pub fn conditional_tail_sample<R: Rng + ?Sized>(
    rng: &mut R,
    p: &ParetoParams,
    floor: f64,
) -> Result<f64> {
    let tail = p.with_floor(floor)?;
    Ok(pareto_sample(rng, &tail))
}

/// `E[min(T_1, .., T_n)]` for iid `Pareto(t_min, beta)` attempts.
pub fn min_expectation(p: &ParetoParams, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    let nb = n as f64 * p.beta;
    if nb <= 1.0 {
        return Err(Error::divergent("n*beta <= 1"));
    }
    Ok(p.t_min * nb / (nb - 1.0))
}

/// `E[T | T <= deadline]`.
///
/// Evaluated through `expm1` so the `beta -> 1` neighbourhood keeps full
/// precision; `beta == 1` uses the logarithmic limit.
pub fn truncated_mean(p: &ParetoParams, deadline: f64) -> Result<f64> {
    let (t, b) = (p.t_min, p.beta);
    if !(deadline > t) {
        return Err(Error::InvalidDeadline { deadline, t_min: t });
    }
    if deadline.is_infinite() {
        return p
            .mean()
            .ok_or_else(|| Error::divergent("beta <= 1 with unbounded deadline"));
    }
    let log_ratio = (t / deadline).ln(); // < 0
    let mass = -(b * log_ratio).exp_m1(); // P(T <= D)
                                          // int_t^D x^-beta dx, scaled by t^(beta-1)
    let integral = if b == 1.0 {
        -log_ratio
    } else {
        -((b - 1.0) * log_ratio).exp_m1() / (b - 1.0)
    };
    Ok(b * t * integral / mass)
}

/// Strategy family. The first three are the mitigation strategies with
/// closed forms; the rest are simulated baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    Clone,
    SRestart,
    SResume,
    HadoopNs,
    HadoopS,
    Mantri,
}

impl StrategyKind {
    pub const ANALYTIC: [StrategyKind; 3] = [
        StrategyKind::Clone,
        StrategyKind::SRestart,
        StrategyKind::SResume,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Clone => "clone",
            StrategyKind::SRestart => "s-restart",
            StrategyKind::SResume => "s-resume",
            StrategyKind::HadoopNs => "hadoop-ns",
            StrategyKind::HadoopS => "hadoop-s",
            StrategyKind::Mantri => "mantri",
        }
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(
            self,
            StrategyKind::Clone | StrategyKind::SRestart | StrategyKind::SResume
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clone" => Ok(StrategyKind::Clone),
            "s-restart" | "srestart" | "restart" => Ok(StrategyKind::SRestart),
            "s-resume" | "sresume" | "resume" => Ok(StrategyKind::SResume),
            "hadoop-ns" | "hns" => Ok(StrategyKind::HadoopNs),
            "hadoop-s" | "hs" => Ok(StrategyKind::HadoopS),
            "mantri" => Ok(StrategyKind::Mantri),
            other => Err(Error::param(
                "strategy",
                format!("unknown strategy `{other}`"),
            )),
        }
    }
}

/// One MapReduce job (single wave of map tasks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub submit_time: f64,
    pub num_tasks: u32,
    pub deadline: f64,
    /// Dollars per VM-second.
    pub price: f64,
    pub dist: ParetoParams,
}

impl JobSpec {
    pub fn new(
        job_id: impl Into<String>,
        submit_time: f64,
        num_tasks: u32,
        deadline: f64,
        price: f64,
        dist: ParetoParams,
    ) -> Result<Self> {
        let job = Self {
            job_id: job_id.into(),
            submit_time,
            num_tasks,
            deadline,
            price,
            dist,
        };
        job.validate()?;
        Ok(job)
    }

    /// Job with id "job", submitted at 0, unit price.
    pub fn simple(t_min: f64, beta: f64, deadline: f64, num_tasks: u32) -> Result<Self> {
        Self::new(
            "job",
            0.0,
            num_tasks,
            deadline,
            1.0,
            ParetoParams::new(t_min, beta)?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::param("num_tasks", "must be >= 1"));
        }
        if !self.submit_time.is_finite() {
            return Err(Error::param("submit_time", "must be finite"));
        }
        if !(self.price >= 0.0 && self.price.is_finite()) {
            return Err(Error::param(
                "price",
                format!("must be finite and >= 0, got {}", self.price),
            ));
        }
        if !(self.deadline > self.dist.t_min()) {
            return Err(Error::InvalidDeadline {
                deadline: self.deadline,
                t_min: self.dist.t_min(),
            });
        }
        Ok(())
    }

    pub fn with_deadline(&self, deadline: f64) -> Self {
        Self {
            deadline,
            ..self.clone()
        }
    }
}

/// Strategy plus its knobs. `tau_est` and `tau_kill` are measured from job
/// start; baselines ignore them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub r: u32,
    pub tau_est: f64,
    pub tau_kill: f64,
    pub phi_est: f64,
}

impl StrategyConfig {
    pub fn clone_attempts(r: u32, tau_kill: f64) -> Self {
        Self {
            kind: StrategyKind::Clone,
            r,
            tau_est: 0.0,
            tau_kill,
            phi_est: 0.0,
        }
    }

    pub fn s_restart(r: u32, tau_est: f64, tau_kill: f64) -> Self {
        Self {
            kind: StrategyKind::SRestart,
            r,
            tau_est,
            tau_kill,
            phi_est: 0.0,
        }
    }

    pub fn s_resume(r: u32, tau_est: f64, tau_kill: f64, phi_est: f64) -> Self {
        Self {
            kind: StrategyKind::SResume,
            r,
            tau_est,
            tau_kill,
            phi_est,
        }
    }

    pub fn baseline(kind: StrategyKind) -> Self {
        Self {
            kind,
            r: 0,
            tau_est: 0.0,
            tau_kill: 0.0,
            phi_est: 0.0,
        }
    }

    pub fn with_r(self, r: u32) -> Self {
        Self { r, ..self }
    }

    pub fn validate(&self, job: &JobSpec) -> Result<()> {
        if !self.kind.has_closed_form() {
            return Ok(());
        }
        let d = job.deadline;
        if self.kind == StrategyKind::Clone && self.tau_est != 0.0 {
            return Err(Error::param("tau_est", "Clone requires tau_est = 0"));
        }
        if !(self.tau_est >= 0.0 && self.tau_est < d) {
            return Err(Error::param(
                "tau_est",
                format!("need 0 <= tau_est < D, got {}", self.tau_est),
            ));
        }
        if !(self.tau_kill > self.tau_est && self.tau_kill <= d) {
            return Err(Error::param(
                "tau_kill",
                format!("need tau_est < tau_kill <= D, got {}", self.tau_kill),
            ));
        }
        if !(0.0..1.0).contains(&self.phi_est) {
            return Err(Error::param(
                "phi_est",
                format!("need 0 <= phi < 1, got {}", self.phi_est),
            ));
        }
        Ok(())
    }
}

/// Identifier of a reproducible random substream.
///
/// Backed by ChaCha8, which is counter based: the `(seed, stream_index)` pair
/// selects a keystream, and each lane is a disjoint block of 2^40 words
/// inside it. No state is shared between streams, so any parallel schedule
/// sees the same numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl SampleStream {
    const LANE_SHIFT: u32 = 40;

    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        self.lane(0)
    }

    /// Generator for an independent lane of this stream.
    pub fn lane(&self, lane: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng.set_word_pos((lane as u128) << Self::LANE_SHIFT);
        rng
    }
}
