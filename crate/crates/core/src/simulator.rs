//! Monte Carlo execution of single-wave jobs under the three mitigation
//! strategies and the Hadoop-NS, Hadoop-S and Mantri baselines.
//!
//! Attempts progress linearly: an attempt launched at `t_lau` with work `T`
//! shows progress `clamp((t - t_lau - jvm_delay) / T, 0, 1)` and finishes at
//! `t_lau + jvm_delay + T`. Machine time is the sum over attempts of the time
//! each was alive.
//!
//! Randomness is drawn from two lanes of the trial's [`SampleStream`]: lane 0
//! supplies every task's original attempt (in task order), lane 1 every
//! extra attempt. Strategies therefore share original durations trial by
//! trial, which makes Hadoop-NS and Clone with `r = 0` identical and keeps
//! strategy comparisons low-variance.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{open_closed_unit, JobSpec, SampleStream, StrategyConfig, StrategyKind};
use crate::optimizer::UtilityConfig;

/// Bytes in one input split; progress is mapped onto byte offsets at this
/// resolution when resuming.
pub const SPLIT_BYTES: u64 = 1 << 27;

/// Trials per parallel work unit. Fixed, so results do not depend on the
/// number of worker threads.
const CHUNK: u64 = 1024;

/// How a running attempt's completion time is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    /// The true finish time.
    Oracle,
    /// [`estimate_completion`], which accounts for the startup delay before
    /// the first progress report.
    Estimator,
    /// [`hadoop_estimate`], which ignores the startup delay.
    HadoopEstimator,
}

/// Remaining work given to resumed attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResumeWork {
    /// Derived per task from the original's byte offset at detection.
    Measured,
    /// A fixed fraction `phi` already done, i.e. `(1 - phi)` remaining.
    FixedPhi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub trials: u64,
    pub detection: Detection,
    /// Time from launch to first progress report.
    pub jvm_delay: f64,
    /// Resumed attempts run for at least `t_min`.
    pub winner_floor: bool,
    pub resume_work: ResumeWork,
    pub hadoop_s_period: f64,
    pub mantri_period: f64,
    pub mantri_gap: f64,
    pub mantri_max_extra: u32,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            detection: Detection::Oracle,
            jvm_delay: 0.0,
            winner_floor: true,
            resume_work: ResumeWork::Measured,
            hadoop_s_period: 10.0,
            mantri_period: 10.0,
            mantri_gap: 30.0,
            mantri_max_extra: 3,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("trials", "must be >= 1"));
        }
        if !(self.jvm_delay >= 0.0 && self.jvm_delay.is_finite()) {
            return Err(Error::param("jvm_delay", "must be finite and >= 0"));
        }
        for (name, v) in [
            ("hadoop_s_period", self.hadoop_s_period),
            ("mantri_period", self.mantri_period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        if !(self.mantri_gap >= 0.0 && self.mantri_gap.is_finite()) {
            return Err(Error::param("mantri_gap", "must be finite and >= 0"));
        }
        if let ResumeWork::FixedPhi(phi) = self.resume_work {
            if !(0.0..1.0).contains(&phi) {
                return Err(Error::param("phi", format!("need 0 <= phi < 1, got {phi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptRecord {
    pub launch_time: f64,
    pub first_progress_time: f64,
    pub total_work: f64,
    pub killed_at: Option<f64>,
    pub finished_at: Option<f64>,
}

impl AttemptRecord {
    pub fn end(&self) -> f64 {
        self.finished_at.or(self.killed_at).unwrap_or(f64::NAN)
    }

    pub fn machine_time(&self) -> f64 {
        self.end() - self.launch_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskOutcome {
    pub finish_time: f64,
    pub machine_time: f64,
    /// Flagged for mitigation (reactive strategies and baselines) or, for
    /// Clone, original attempt past the deadline.
    pub straggler: bool,
    pub attempts_launched: u32,
    /// Original attempt's progress at `tau_est`, if it was still running.
    pub phi_at_est: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutcome {
    pub completion_time: f64,
    pub machine_time: f64,
    pub met_deadline: bool,
    pub tasks: Vec<TaskOutcome>,
}

/// A job outcome together with every attempt, grouped by task.
#[derive(Debug, Clone, PartialEq)]
pub struct JobTrace {
    pub outcome: JobOutcome,
    pub attempts: Vec<Vec<AttemptRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimReport {
    pub trials: u64,
    pub pocd_hat: f64,
    /// `sqrt(p (1 - p) / n)`; zero for a single trial.
    pub pocd_stderr: f64,
    pub mean_machine_time: f64,
    /// Sample standard deviation over `sqrt(n)`; zero for a single trial.
    pub machine_time_stderr: f64,
    pub mean_completion_time: f64,
    /// Mean original-attempt progress at `tau_est` over flagged tasks.
    pub mean_phi_est: Option<f64>,
    /// Fraction of tasks flagged as stragglers.
    pub straggler_rate: f64,
    pub utility_hat: Option<f64>,
}

impl SimReport {
    /// Fills `utility_hat` from the estimated PoCD and machine time.
    pub fn with_utility(mut self, cfg: &UtilityConfig, r_min: f64) -> Self {
        self.utility_hat = Some(if self.pocd_hat <= r_min {
            f64::NEG_INFINITY
        } else {
            (self.pocd_hat - r_min).ln() / cfg.log_base.ln()
                - cfg.theta * cfg.price * self.mean_machine_time
        });
        self
    }
}

/// Completion estimate from progress reports:
/// `t_lau + (t_fp - t_lau) + (t_now - t_fp) / (cp - fp)`.
///
/// `fp` is the progress at the first report `t_fp`, `cp` the progress now.
pub fn estimate_completion(t_lau: f64, t_fp: f64, t_now: f64, fp: f64, cp: f64) -> Result<f64> {
    if !(cp > fp) {
        return Err(Error::NoProgress { fp, cp });
    }
    if !(t_lau <= t_fp && t_fp <= t_now) {
        return Err(Error::InvalidTimes {
            condition: format!("need t_lau <= t_fp <= t_now, got {t_lau}, {t_fp}, {t_now}"),
        });
    }
    Ok(t_lau + (t_fp - t_lau) + (t_now - t_fp) / (cp - fp))
}

/// Hadoop's default estimate `t_lau + (t_now - t_lau) / cp`, which treats
/// the startup delay as if work were being done.
pub fn hadoop_estimate(t_lau: f64, t_now: f64, cp: f64) -> Result<f64> {
    if !(cp > 0.0) {
        return Err(Error::NoProgress { fp: 0.0, cp });
    }
    Ok(t_lau + (t_now - t_lau) / cp)
}

/// Byte offset at which a resumed attempt starts:
/// `b_start + b_est + b_est / (tau_est - t_fp) * (t_fp - t_lau)`.
///
/// The last term covers bytes the original processes while the new attempt
/// is still starting up.
pub fn resume_offset(b_start: u64, b_est: u64, tau_est: f64, t_fp: f64, t_lau: f64) -> Result<u64> {
    if !(tau_est > t_fp) {
        return Err(Error::InvalidTimes {
            condition: format!("tau_est <= t_fp ({tau_est} <= {t_fp})"),
        });
    }
    if !(t_fp >= t_lau) {
        return Err(Error::InvalidTimes {
            condition: format!("t_fp < t_lau ({t_fp} < {t_lau})"),
        });
    }
    let extra = (b_est as f64 / (tau_est - t_fp) * (t_fp - t_lau)).round() as u64;
    Ok(b_start + b_est + extra)
}

struct Ctx {
    t_min: f64,
    neg_inv_beta: f64,
    deadline: f64,
    jvm: f64,
    detection: Detection,
    winner_floor: bool,
    resume_work: ResumeWork,
    hadoop_s_period: f64,
    mantri_period: f64,
    mantri_threshold: f64,
    mantri_max_extra: u32,
}

impl Ctx {
    fn new(job: &JobSpec, sim: &SimConfig) -> Self {
        let (t, b) = (job.dist.t_min(), job.dist.beta());
        // "average task execution time"; the median stands in when the mean
        // is infinite
        let typical = job.dist.mean().unwrap_or(t * 2f64.powf(1.0 / b));
        Self {
            t_min: t,
            neg_inv_beta: -1.0 / b,
            deadline: job.deadline,
            jvm: sim.jvm_delay,
            detection: sim.detection,
            winner_floor: sim.winner_floor,
            resume_work: sim.resume_work,
            hadoop_s_period: sim.hadoop_s_period,
            mantri_period: sim.mantri_period,
            mantri_threshold: sim.jvm_delay + typical + sim.mantri_gap,
            mantri_max_extra: sim.mantri_max_extra,
        }
    }

    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.t_min * (open_closed_unit(rng).ln() * self.neg_inv_beta).exp()
    }

    #[inline]
    fn progress(&self, launch: f64, work: f64, now: f64) -> f64 {
        ((now - launch - self.jvm) / work).clamp(0.0, 1.0)
    }

    /// Completion time as seen by the detection mode; infinite while the
    /// attempt has reported no progress (non-oracle modes).
    fn judged_completion(&self, launch: f64, work: f64, now: f64) -> f64 {
        let finish = launch + self.jvm + work;
        if self.detection == Detection::Oracle || finish <= now {
            return finish;
        }
        let cp = self.progress(launch, work, now);
        let est = match self.detection {
            Detection::Estimator => estimate_completion(launch, launch + self.jvm, now, 0.0, cp),
            _ => hadoop_estimate(launch, now, cp),
        };
        est.unwrap_or(f64::INFINITY)
    }

    fn flagged(&self, work: f64, now: f64) -> bool {
        self.judged_completion(0.0, work, now) > self.deadline
    }
}

/// One attempt during simulation.
#[derive(Debug, Clone, Copy)]
struct Attempt {
    launch: f64,
    work: f64,
    end: f64,
    finished: bool,
}

impl Attempt {
    fn new(launch: f64, work: f64) -> Self {
        Self {
            launch,
            work,
            end: f64::NAN,
            finished: false,
        }
    }

    fn record(&self, jvm: f64) -> AttemptRecord {
        AttemptRecord {
            launch_time: self.launch,
            first_progress_time: self.launch + jvm,
            total_work: self.work,
            killed_at: (!self.finished).then_some(self.end),
            finished_at: self.finished.then_some(self.end),
        }
    }
}

/// Reusable per-trial buffers.
#[derive(Default)]
struct Scratch {
    attempts: Vec<Attempt>,
    trace: Option<Vec<Vec<AttemptRecord>>>,
    hadoop: Vec<HadoopTask>,
}

impl Scratch {
    fn tracing() -> Self {
        Self {
            trace: Some(Vec::new()),
            ..Self::default()
        }
    }
}

/// Ends all attempts at `finish_time` (the finisher is `winner`), sums
/// machine time in attempt order and records the attempts when tracing.
fn close_task(
    ctx: &Ctx,
    scratch: &mut Scratch,
    winner: usize,
    finish_time: f64,
    straggler: bool,
    phi_at_est: Option<f64>,
) -> TaskOutcome {
    let mut machine = 0.0;
    for (i, a) in scratch.attempts.iter_mut().enumerate() {
        if a.end.is_nan() {
            a.end = finish_time;
            a.finished = i == winner;
        }
        machine += a.end - a.launch;
    }
    if let Some(trace) = scratch.trace.as_mut() {
        trace.push(scratch.attempts.iter().map(|a| a.record(ctx.jvm)).collect());
    }
    TaskOutcome {
        finish_time,
        machine_time: machine,
        straggler,
        attempts_launched: scratch.attempts.len() as u32,
        phi_at_est,
    }
}

/// A task that ran its original attempt only, launched at 0.
fn single_attempt(
    ctx: &Ctx,
    scratch: &mut Scratch,
    work: f64,
    straggler: bool,
    phi_at_est: Option<f64>,
) -> TaskOutcome {
    let finish = ctx.jvm + work;
    if scratch.trace.is_some() {
        scratch.attempts.clear();
        scratch.attempts.push(Attempt::new(0.0, work));
        return close_task(ctx, scratch, 0, finish, straggler, phi_at_est);
    }
    TaskOutcome {
        finish_time: finish,
        machine_time: finish,
        straggler,
        attempts_launched: 1,
        phi_at_est,
    }
}

fn first_finisher(ctx: &Ctx, attempts: &[Attempt]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, a) in attempts.iter().enumerate() {
        if a.end.is_nan() {
            let f = a.launch + ctx.jvm + a.work;
            if f < best.1 {
                best = (i, f);
            }
        }
    }
    best
}

/// At `tau_kill`, keep the alive attempt with the smallest judged
/// completion (ties to the lowest index) and kill the rest.
fn prune_by_estimate(ctx: &Ctx, attempts: &mut [Attempt], tau_kill: f64) {
    let mut keep = usize::MAX;
    let mut best = f64::INFINITY;
    for (i, a) in attempts.iter().enumerate() {
        if a.end.is_nan() {
            let e = ctx.judged_completion(a.launch, a.work, tau_kill);
            if keep == usize::MAX || e < best {
                keep = i;
                best = e;
            }
        }
    }
    for (i, a) in attempts.iter_mut().enumerate() {
        if i != keep && a.end.is_nan() {
            a.end = tau_kill;
        }
    }
}

fn task_clone<R: Rng>(
    ctx: &Ctx,
    s: &StrategyConfig,
    rng0: &mut R,
    rng1: &mut R,
    scratch: &mut Scratch,
) -> TaskOutcome {
    if s.r == 0 {
        let work = ctx.sample(rng0);
        return single_attempt(ctx, scratch, work, ctx.jvm + work > ctx.deadline, None);
    }
    scratch.attempts.clear();
    scratch.attempts.push(Attempt::new(0.0, ctx.sample(rng0)));
    for _ in 0..s.r {
        scratch.attempts.push(Attempt::new(0.0, ctx.sample(rng1)));
    }
    let straggler = ctx.jvm + scratch.attempts[0].work > ctx.deadline;
    let (win, first) = first_finisher(ctx, &scratch.attempts);
    if s.r > 0 && first > s.tau_kill {
        // same launch time and delay, so best progress is the least work
        let mut keep = 0;
        for (i, a) in scratch.attempts.iter().enumerate() {
            if ctx.progress(0.0, a.work, s.tau_kill)
                > ctx.progress(0.0, scratch.attempts[keep].work, s.tau_kill)
            {
                keep = i;
            }
        }
        for (i, a) in scratch.attempts.iter_mut().enumerate() {
            if i != keep {
                a.end = s.tau_kill;
            }
        }
        let finish = ctx.jvm + scratch.attempts[keep].work;
        return close_task(ctx, scratch, keep, finish, straggler, None);
    }
    close_task(ctx, scratch, win, first, straggler, None)
}

fn task_restart<R: Rng>(
    ctx: &Ctx,
    s: &StrategyConfig,
    rng0: &mut R,
    rng1: &mut R,
    scratch: &mut Scratch,
) -> TaskOutcome {
    let t1 = ctx.sample(rng0);
    if ctx.jvm + t1 <= s.tau_est {
        return single_attempt(ctx, scratch, t1, false, None);
    }
    let phi = ctx.progress(0.0, t1, s.tau_est);
    let flagged = ctx.flagged(t1, s.tau_est);
    if !flagged || s.r == 0 {
        return single_attempt(ctx, scratch, t1, flagged, Some(phi));
    }
    scratch.attempts.clear();
    scratch.attempts.push(Attempt::new(0.0, t1));
    for _ in 0..s.r {
        scratch
            .attempts
            .push(Attempt::new(s.tau_est, ctx.sample(rng1)));
    }
    let (win, first) = first_finisher(ctx, &scratch.attempts);
    if first <= s.tau_kill {
        return close_task(ctx, scratch, win, first, true, Some(phi));
    }
    prune_by_estimate(ctx, &mut scratch.attempts, s.tau_kill);
    let (win, first) = first_finisher(ctx, &scratch.attempts);
    close_task(ctx, scratch, win, first, true, Some(phi))
}

fn task_resume<R: Rng>(
    ctx: &Ctx,
    s: &StrategyConfig,
    rng0: &mut R,
    rng1: &mut R,
    scratch: &mut Scratch,
) -> TaskOutcome {
    let t1 = ctx.sample(rng0);
    let f1 = ctx.jvm + t1;
    let tau = s.tau_est;
    if f1 <= tau {
        return single_attempt(ctx, scratch, t1, false, None);
    }
    let phi = ctx.progress(0.0, t1, tau);
    if !ctx.flagged(t1, tau) {
        return single_attempt(ctx, scratch, t1, false, Some(phi));
    }
    scratch.attempts.clear();
    scratch.attempts.push(Attempt::new(0.0, t1));
    let remaining = match ctx.resume_work {
        ResumeWork::FixedPhi(p) => 1.0 - p,
        ResumeWork::Measured => {
            let b_est = (phi * SPLIT_BYTES as f64).round() as u64;
            let b_new = resume_offset(0, b_est, tau, ctx.jvm, 0.0)
                .unwrap_or(0)
                .min(SPLIT_BYTES);
            (SPLIT_BYTES - b_new) as f64 / SPLIT_BYTES as f64
        }
    };
    for _ in 0..=s.r {
        let mut w = remaining * ctx.sample(rng1);
        if ctx.winner_floor {
            w = w.max(ctx.t_min);
        }
        scratch.attempts.push(Attempt::new(tau, w));
    }
    // the original keeps processing until the resumed attempts start work
    let handover = tau + ctx.jvm;
    if f1 <= handover {
        return close_task(ctx, scratch, 0, f1, true, Some(phi));
    }
    scratch.attempts[0].end = handover;
    let (win, first) = first_finisher(ctx, &scratch.attempts);
    if first <= s.tau_kill {
        return close_task(ctx, scratch, win, first, true, Some(phi));
    }
    prune_by_estimate(ctx, &mut scratch.attempts, s.tau_kill);
    let (win, first) = first_finisher(ctx, &scratch.attempts);
    close_task(ctx, scratch, win, first, true, Some(phi))
}

fn task_mantri<R: Rng>(
    ctx: &Ctx,
    rng0: &mut R,
    rng1: &mut R,
    scratch: &mut Scratch,
) -> TaskOutcome {
    scratch.attempts.clear();
    scratch.attempts.push(Attempt::new(0.0, ctx.sample(rng0)));
    let mut extras = 0;
    let mut k = 1u64;
    loop {
        let now = k as f64 * ctx.mantri_period;
        let (win, first) = first_finisher(ctx, &scratch.attempts);
        if first <= now {
            return close_task(ctx, scratch, win, first, extras > 0, None);
        }
        // keep the best attempt among those that have reported progress;
        // attempts still starting up are left alone
        let mut best: Option<(usize, f64)> = None;
        for (i, a) in scratch.attempts.iter().enumerate() {
            if a.end.is_nan() && ctx.progress(a.launch, a.work, now) > 0.0 {
                let e = ctx.judged_completion(a.launch, a.work, now);
                if best.map_or(true, |(_, b)| e < b) {
                    best = Some((i, e));
                }
            }
        }
        if let Some((keep, est)) = best {
            for (i, a) in scratch.attempts.iter_mut().enumerate() {
                if i != keep && a.end.is_nan() && ctx.progress(a.launch, a.work, now) > 0.0 {
                    a.end = now;
                }
            }
            let remaining = est - now;
            let wants_more = remaining > ctx.mantri_threshold;
            if wants_more && extras < ctx.mantri_max_extra {
                scratch.attempts.push(Attempt::new(now, ctx.sample(rng1)));
                extras += 1;
            } else if scratch.attempts.iter().filter(|a| a.end.is_nan()).count() == 1 {
                // judged remaining time only shrinks, so nothing changes
                // before this attempt finishes
                let finish = scratch.attempts[keep].launch + ctx.jvm + scratch.attempts[keep].work;
                return close_task(ctx, scratch, keep, finish, extras > 0, None);
            }
        }
        k += 1;
    }
}

#[derive(Debug, Clone, Copy)]
struct HadoopTask {
    work: f64,
    extra: Option<(f64, f64)>,
    finish: f64,
}

fn job_hadoop_s<R: Rng>(
    ctx: &Ctx,
    n: u32,
    rng0: &mut R,
    rng1: &mut R,
    scratch: &mut Scratch,
    emit: &mut impl FnMut(TaskOutcome),
) {
    let mut tasks = std::mem::take(&mut scratch.hadoop);
    tasks.clear();
    for _ in 0..n {
        let work = ctx.sample(rng0);
        tasks.push(HadoopTask {
            work,
            extra: None,
            finish: ctx.jvm + work,
        });
    }
    let t_first = tasks.iter().map(|t| t.finish).fold(f64::INFINITY, f64::min);
    let period = ctx.hadoop_s_period;
    let mut k = 0u64;
    loop {
        let now = t_first + k as f64 * period;
        let mut done = 0usize;
        let mut done_sum = 0.0;
        let mut pending = false;
        for t in tasks.iter() {
            if t.finish <= now {
                done += 1;
                done_sum += t.finish;
            } else if t.extra.is_none() {
                pending = true;
            }
        }
        if !pending {
            break;
        }
        let avg = done_sum / done as f64;
        let mut pick: Option<(usize, f64)> = None;
        for (i, t) in tasks.iter().enumerate() {
            if t.finish > now && t.extra.is_none() {
                let gap = ctx.judged_completion(0.0, t.work, now) - avg;
                if gap.is_finite() && gap > 0.0 && pick.map_or(true, |(_, g)| gap > g) {
                    pick = Some((i, gap));
                }
            }
        }
        if let Some((i, _)) = pick {
            let w = ctx.sample(rng1);
            let t = &mut tasks[i];
            t.extra = Some((now, w));
            t.finish = t.finish.min(now + ctx.jvm + w);
            k += 1;
            continue;
        }
        // Judged gaps only shrink between events, so skip to the first
        // check at or after the next finish (or first progress report).
        let mut next = tasks
            .iter()
            .map(|t| t.finish)
            .filter(|&f| f > now)
            .fold(f64::INFINITY, f64::min);
        if ctx.jvm > now {
            next = next.min(ctx.jvm);
        }
        let steps = ((next - t_first) / period).ceil() as u64;
        k = steps.max(k + 1);
    }
    for t in tasks.iter() {
        scratch.attempts.clear();
        scratch.attempts.push(Attempt::new(0.0, t.work));
        let mut winner = 0;
        if let Some((launch, w)) = t.extra {
            scratch.attempts.push(Attempt::new(launch, w));
            if launch + ctx.jvm + w < ctx.jvm + t.work {
                winner = 1;
            }
        }
        emit(close_task(
            ctx,
            scratch,
            winner,
            t.finish,
            t.extra.is_some(),
            None,
        ));
    }
    scratch.hadoop = tasks;
}

fn run_job(
    ctx: &Ctx,
    job: &JobSpec,
    s: &StrategyConfig,
    stream: SampleStream,
    scratch: &mut Scratch,
    mut emit: impl FnMut(TaskOutcome),
) {
    let mut rng0 = stream.lane(0);
    let mut rng1 = stream.lane(1);
    let n = job.num_tasks;
    let (r0, r1) = (&mut rng0, &mut rng1);
    match s.kind {
        StrategyKind::Clone => (0..n).for_each(|_| emit(task_clone(ctx, s, r0, r1, scratch))),
        StrategyKind::HadoopNs => {
            let plain = StrategyConfig::baseline(StrategyKind::Clone);
            (0..n).for_each(|_| emit(task_clone(ctx, &plain, r0, r1, scratch)))
        }
        StrategyKind::SRestart => (0..n).for_each(|_| emit(task_restart(ctx, s, r0, r1, scratch))),
        StrategyKind::SResume => (0..n).for_each(|_| emit(task_resume(ctx, s, r0, r1, scratch))),
        StrategyKind::Mantri => (0..n).for_each(|_| emit(task_mantri(ctx, r0, r1, scratch))),
        StrategyKind::HadoopS => job_hadoop_s(ctx, n, r0, r1, scratch, &mut emit),
    }
}

fn check_inputs(job: &JobSpec, s: &StrategyConfig, sim: &SimConfig) -> Result<()> {
    job.validate()?;
    sim.validate()?;
    s.validate(job)
}

fn collect_job(
    job: &JobSpec,
    s: &StrategyConfig,
    sim: &SimConfig,
    stream: SampleStream,
    scratch: &mut Scratch,
) -> JobOutcome {
    let ctx = Ctx::new(job, sim);
    let mut tasks = Vec::with_capacity(job.num_tasks as usize);
    run_job(&ctx, job, s, stream, scratch, |t| tasks.push(t));
    let completion_time = tasks.iter().map(|t| t.finish_time).fold(0.0, f64::max);
    let machine_time = tasks.iter().map(|t| t.machine_time).sum();
    JobOutcome {
        completion_time,
        machine_time,
        met_deadline: completion_time <= job.deadline,
        tasks,
    }
}

/// Runs one job: `N` tasks under `strategy`, randomness from `stream`.
pub fn simulate_job(
    job: &JobSpec,
    strategy: &StrategyConfig,
    sim: &SimConfig,
    stream: SampleStream,
) -> Result<JobOutcome> {
    check_inputs(job, strategy, sim)?;
    Ok(collect_job(
        job,
        strategy,
        sim,
        stream,
        &mut Scratch::default(),
    ))
}

/// [`simulate_job`] plus a record of every attempt.
pub fn simulate_job_traced(
    job: &JobSpec,
    strategy: &StrategyConfig,
    sim: &SimConfig,
    stream: SampleStream,
) -> Result<JobTrace> {
    check_inputs(job, strategy, sim)?;
    let mut scratch = Scratch::tracing();
    let outcome = collect_job(job, strategy, sim, stream, &mut scratch);
    Ok(JobTrace {
        outcome,
        attempts: scratch.trace.unwrap_or_default(),
    })
}

/// Hadoop with built-in speculation: after the first task finishes, every
/// `hadoop_s_period` one extra attempt goes to the running task whose
/// judged completion exceeds the mean finish time of completed tasks by the
/// most (at most one extra per task).
pub fn baseline_hadoop_s(
    job: &JobSpec,
    sim: &SimConfig,
    stream: SampleStream,
) -> Result<JobOutcome> {
    simulate_job(
        job,
        &StrategyConfig::baseline(StrategyKind::HadoopS),
        sim,
        stream,
    )
}

/// Mantri: every `mantri_period`, prune each task to its best attempt and
/// launch another when the judged remaining time exceeds the typical task
/// time by `mantri_gap`, up to `mantri_max_extra` extras. Never reads the
/// deadline.
pub fn baseline_mantri(job: &JobSpec, sim: &SimConfig, stream: SampleStream) -> Result<JobOutcome> {
    simulate_job(
        job,
        &StrategyConfig::baseline(StrategyKind::Mantri),
        sim,
        stream,
    )
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        Moments {
            n,
            mean: self.mean + d * nb / n as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / n as f64,
        }
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    met: u64,
    machine: Moments,
    completion: CompensatedSum,
    phi: CompensatedSum,
    phi_n: u64,
    stragglers: u64,
    tasks: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.met += o.met;
        self.machine = self.machine.merge(o.machine);
        self.completion.add(o.completion.value());
        self.phi.add(o.phi.value());
        self.phi_n += o.phi_n;
        self.stragglers += o.stragglers;
        self.tasks += o.tasks;
        self
    }
}

fn run_chunk(
    ctx: &Ctx,
    job: &JobSpec,
    s: &StrategyConfig,
    seed: u64,
    range: std::ops::Range<u64>,
) -> Tally {
    let mut tally = Tally::default();
    let mut scratch = Scratch::default();
    for i in range {
        let mut completion: f64 = 0.0;
        let mut machine = 0.0;
        run_job(ctx, job, s, SampleStream::new(seed, i), &mut scratch, |t| {
            completion = completion.max(t.finish_time);
            machine += t.machine_time;
            tally.tasks += 1;
            if t.straggler {
                tally.stragglers += 1;
                if let Some(p) = t.phi_at_est {
                    tally.phi.add(p);
                    tally.phi_n += 1;
                }
            }
        });
        tally.met += u64::from(completion <= job.deadline);
        tally.machine.push(machine);
        tally.completion.add(completion);
    }
    tally
}

/// Aggregates `sim.trials` independent jobs; trial `i` uses
/// `SampleStream::new(sim.seed, i)`. The result is bitwise identical for
/// any thread count.
pub fn run_trials(job: &JobSpec, strategy: &StrategyConfig, sim: &SimConfig) -> Result<SimReport> {
    check_inputs(job, strategy, sim)?;
    let ctx = Ctx::new(job, sim);
    let chunks = sim.trials.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(sim.trials);
            run_chunk(&ctx, job, strategy, sim.seed, lo..hi)
        })
        .collect();
    let total = tallies.into_iter().fold(Tally::default(), Tally::merge);

    let n = sim.trials as f64;
    let p = total.met as f64 / n;
    let (pocd_stderr, machine_time_stderr) = if sim.trials > 1 {
        let var = total.machine.m2 / (n - 1.0);
        ((p * (1.0 - p) / n).sqrt(), (var / n).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(SimReport {
        trials: sim.trials,
        pocd_hat: p,
        pocd_stderr,
        mean_machine_time: total.machine.mean,
        machine_time_stderr,
        mean_completion_time: total.completion.value() / n,
        mean_phi_est: (total.phi_n > 0).then(|| total.phi.value() / total.phi_n as f64),
        straggler_rate: total.stragglers as f64 / total.tasks as f64,
        utility_hat: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(t: f64, b: f64, d: f64, n: u32) -> JobSpec {
        JobSpec::simple(t, b, d, n).unwrap()
    }

    #[test]
    fn estimator_examples() {
        assert_eq!(estimate_completion(0.0, 2.0, 4.0, 0.0, 0.5).unwrap(), 6.0);
        assert!(matches!(
            estimate_completion(0.0, 2.0, 4.0, 0.3, 0.3),
            Err(Error::NoProgress { .. })
        ));
        assert_eq!(hadoop_estimate(0.0, 4.0, 0.5).unwrap(), 8.0);
    }

    #[test]
    fn resume_offset_examples() {
        assert_eq!(resume_offset(0, 100, 5.0, 1.0, 0.0).unwrap(), 125);
        assert_eq!(resume_offset(7, 100, 5.0, 0.0, 0.0).unwrap(), 107);
        assert_eq!(resume_offset(7, 0, 5.0, 1.0, 0.0).unwrap(), 7);
        assert!(matches!(
            resume_offset(0, 100, 1.0, 1.0, 0.0),
            Err(Error::InvalidTimes { .. })
        ));
    }

    #[test]
    fn single_trial_has_zero_stderr() {
        let sim = SimConfig {
            trials: 1,
            ..SimConfig::default()
        };
        let rep = run_trials(
            &job(1.0, 1.5, 2.0, 3),
            &StrategyConfig::clone_attempts(1, 0.5),
            &sim,
        )
        .unwrap();
        assert_eq!(rep.pocd_stderr, 0.0);
        assert_eq!(rep.machine_time_stderr, 0.0);
    }

    #[test]
    fn hadoop_ns_is_clone_without_extras() {
        let j = job(1.0, 1.3, 3.0, 7);
        let sim = SimConfig {
            trials: 3000,
            seed: 5,
            ..SimConfig::default()
        };
        let a = run_trials(&j, &StrategyConfig::baseline(StrategyKind::HadoopNs), &sim).unwrap();
        let b = run_trials(&j, &StrategyConfig::clone_attempts(0, 0.5), &sim).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mantri_without_extras_is_hadoop_ns() {
        let j = job(2.0, 1.2, 5.0, 9);
        let sim = SimConfig {
            trials: 2000,
            mantri_max_extra: 0,
            seed: 11,
            ..SimConfig::default()
        };
        let a = run_trials(&j, &StrategyConfig::baseline(StrategyKind::Mantri), &sim).unwrap();
        let b = run_trials(&j, &StrategyConfig::baseline(StrategyKind::HadoopNs), &sim).unwrap();
        assert_eq!(a.pocd_hat, b.pocd_hat);
        assert_eq!(a.mean_machine_time, b.mean_machine_time);
    }

    #[test]
    fn single_task_hadoop_s_never_speculates() {
        let j = job(1.0, 1.1, 2.0, 1);
        for i in 0..200 {
            let out =
                baseline_hadoop_s(&j, &SimConfig::default(), SampleStream::new(3, i)).unwrap();
            assert_eq!(out.tasks[0].attempts_launched, 1);
        }
    }

    #[test]
    fn traced_attempts_account_for_machine_time() {
        let j = job(1.0, 1.4, 3.0, 5);
        let sim = SimConfig::default();
        for s in [
            StrategyConfig::clone_attempts(2, 0.5),
            StrategyConfig::s_restart(2, 0.5, 1.2),
            StrategyConfig::s_resume(2, 0.5, 1.2, 0.0),
            StrategyConfig::baseline(StrategyKind::HadoopS),
            StrategyConfig::baseline(StrategyKind::Mantri),
        ] {
            for i in 0..50 {
                let tr = simulate_job_traced(&j, &s, &sim, SampleStream::new(1, i)).unwrap();
                for (task, attempts) in tr.outcome.tasks.iter().zip(&tr.attempts) {
                    let sum: f64 = attempts.iter().map(|a| a.machine_time()).sum();
                    assert!((sum - task.machine_time).abs() < 1e-9);
                    let finished = attempts.iter().filter(|a| a.finished_at.is_some()).count();
                    assert_eq!(finished, 1, "{s:?}");
                    assert!(attempts
                        .iter()
                        .all(|a| a.finished_at.is_some() != a.killed_at.is_some()));
                    assert!(attempts.iter().all(|a| a.machine_time() >= 0.0));
                }
            }
        }
    }
}
