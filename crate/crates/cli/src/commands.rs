use chronos_core::trace::format_sig9;
use chronos_core::{
    analytics, compare_strategies, gamma_threshold, load_prices, load_trace, net_utility,
    optimize_r, price_at, run_trials, Detection, Error, JobSpec, OptimizationResult,
    OptimizerParams, ResultRow, ResumeWork, SimConfig, SimReport, StrategyConfig, StrategyKind,
    UtilityConfig,
};
use rayon::prelude::*;

use crate::args::*;
use crate::error::{CliError, CliResult};

/// Rows ready for CSV output.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub enum Output {
    Table(Table),
    Results(Vec<ResultRow>),
}

fn num(x: f64) -> String {
    format_sig9(x)
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn kinds(s: StrategyArg) -> Vec<StrategyKind> {
    match s {
        StrategyArg::Clone => vec![StrategyKind::Clone],
        StrategyArg::SRestart => vec![StrategyKind::SRestart],
        StrategyArg::SResume => vec![StrategyKind::SResume],
        StrategyArg::All => StrategyKind::ANALYTIC.to_vec(),
    }
}

impl JobArgs {
    fn beta(&self) -> CliResult<f64> {
        self.beta
            .ok_or_else(|| CliError::Usage("missing required flag --beta".into()))
    }

    fn deadline(&self) -> CliResult<f64> {
        match (self.deadline, self.deadline_multiple) {
            (Some(d), _) => Ok(d),
            (None, Some(m)) => {
                let b = self.beta()?;
                if b <= 1.0 {
                    return Err(Error::DivergentMoment {
                        condition: format!(
                            "--deadline-multiple needs a finite mean: beta <= 1 ({b})"
                        ),
                    }
                    .into());
                }
                Ok(m * self.tmin * b / (b - 1.0))
            }
            (None, None) => Err(CliError::Usage(
                "missing required flag --deadline (or --deadline-multiple)".into(),
            )),
        }
    }

    /// Usage problems come before domain checks.
    fn check_present(&self) -> CliResult<()> {
        self.beta()?;
        if self.deadline.is_none() && self.deadline_multiple.is_none() {
            self.deadline()?;
        }
        Ok(())
    }

    fn job(&self) -> CliResult<JobSpec> {
        self.check_present()?;
        Ok(JobSpec::simple(
            self.tmin,
            self.beta()?,
            self.deadline()?,
            self.ntasks,
        )?)
    }
}

/// Mean progress at `tau_est` of an original attempt that misses the deadline.
pub fn default_phi(job: &JobSpec, tau_est: f64) -> f64 {
    let b = job.dist.beta();
    (tau_est * b / ((b + 1.0) * job.deadline)).min(1.0 - f64::EPSILON)
}

#[derive(Debug, Clone, Copy)]
struct Knobs {
    tau_est: f64,
    tau_kill: f64,
    phi: f64,
}

impl KnobArgs {
    fn resolve(&self, job: &JobSpec) -> Knobs {
        let t = job.dist.t_min();
        let tau_est = self.tau_est.unwrap_or(0.3 * t);
        Knobs {
            tau_est,
            tau_kill: self.tau_kill.unwrap_or(0.8 * t),
            phi: self.phi.unwrap_or_else(|| default_phi(job, tau_est)),
        }
    }
}

fn strategy(kind: StrategyKind, r: u32, job: &JobSpec, k: Knobs) -> CliResult<StrategyConfig> {
    let s = match kind {
        StrategyKind::Clone => StrategyConfig::clone_attempts(r, k.tau_kill),
        StrategyKind::SRestart => StrategyConfig::s_restart(r, k.tau_est, k.tau_kill),
        StrategyKind::SResume => StrategyConfig::s_resume(r, k.tau_est, k.tau_kill, k.phi),
        other => StrategyConfig::baseline(other),
    };
    s.validate(job)?;
    Ok(s)
}

impl UtilArgs {
    fn config(&self) -> UtilityConfig {
        UtilityConfig {
            theta: self.theta,
            r_min_pocd: self.rmin,
            log_base: self.log_base,
            price: self.price,
        }
    }
}

fn search_params(s: &SearchArgs) -> OptimizerParams {
    OptimizerParams {
        r_cap: s.r_cap,
        ..OptimizerParams::default()
    }
}

/// [`optimize_r`], except that a maximiser pinned at the cap is reported
/// (with a warning) rather than treated as an error. With `theta = 0` the
/// utility never decreases in `r`, so the cap is the answer by definition.
fn optimize_or_cap(
    job: &JobSpec,
    s: &StrategyConfig,
    cfg: &UtilityConfig,
    params: &OptimizerParams,
) -> Result<(OptimizationResult, bool), Error> {
    let r_cap = params.r_cap;
    if cfg.theta == 0.0 {
        eprintln!(
            "warning: {}: theta = 0 makes utility nondecreasing in r; reporting r = r_cap = {r_cap}",
            s.kind
        );
        return Ok((at_cap(job, s, cfg, r_cap)?, true));
    }
    match optimize_r(job, s, cfg, params) {
        Ok(o) => Ok((o, false)),
        Err(Error::SearchCapReached { r_cap }) => {
            eprintln!(
                "warning: {}: utility still increasing at r_cap = {r_cap}; reporting r = {r_cap}",
                s.kind
            );
            Ok((at_cap(job, s, cfg, r_cap)?, true))
        }
        Err(e) => Err(e),
    }
}

fn at_cap(
    job: &JobSpec,
    s: &StrategyConfig,
    cfg: &UtilityConfig,
    r_cap: u32,
) -> Result<OptimizationResult, Error> {
    let at = s.with_r(r_cap);
    Ok(OptimizationResult {
        r_opt: r_cap,
        utility: net_utility(job, s, r_cap, cfg)?,
        gamma: gamma_threshold(job, s)?,
        pocd_at_opt: analytics::pocd(job, &at)?.value,
        cost_at_opt: analytics::cost(job, &at)?.expected_machine_time,
        r_min_pocd: cfg.resolve_r_min(job)?,
    })
}

pub fn pocd(a: &PointArgs) -> CliResult<Table> {
    let job = a.job.job()?;
    let k = a.knobs.resolve(&job);
    let mut rows = Vec::new();
    for kind in kinds(a.strategy) {
        let s = strategy(kind, a.r, &job, k)?;
        let p = analytics::pocd(&job, &s)?;
        let mut row = point_inputs(&job, &s);
        row.extend([num(p.value), num(p.per_task_failure)]);
        rows.push(row);
    }
    Ok(Table {
        header: point_header(&["pocd", "per_task_failure"]),
        rows,
    })
}

pub fn cost(a: &PointArgs) -> CliResult<Table> {
    let job = JobSpec {
        price: a.price,
        ..a.job.job()?
    };
    let k = a.knobs.resolve(&job);
    let mut rows = Vec::new();
    for kind in kinds(a.strategy) {
        let s = strategy(kind, a.r, &job, k)?;
        let c = analytics::cost(&job, &s)?;
        let mut row = point_inputs(&job, &s);
        row.extend([
            num(job.price),
            num(c.expected_machine_time),
            num(c.expected_dollars),
        ]);
        rows.push(row);
    }
    Ok(Table {
        header: point_header(&["price", "machine_time", "cost"]),
        rows,
    })
}

fn point_header(extra: &[&'static str]) -> Vec<&'static str> {
    let mut h = vec![
        "strategy", "tmin", "beta", "deadline", "ntasks", "r", "tau_est", "tau_kill", "phi",
    ];
    h.extend_from_slice(extra);
    h
}

fn point_inputs(job: &JobSpec, s: &StrategyConfig) -> Vec<String> {
    vec![
        s.kind.to_string(),
        num(job.dist.t_min()),
        num(job.dist.beta()),
        num(job.deadline),
        job.num_tasks.to_string(),
        s.r.to_string(),
        num(s.tau_est),
        num(s.tau_kill),
        num(s.phi_est),
    ]
}

pub fn utility(a: &UtilityArgs) -> CliResult<Table> {
    let job = a.job.job()?;
    let k = a.knobs.resolve(&job);
    let cfg = a.util.config();
    cfg.validate()?;
    let r_min = cfg.resolve_r_min(&job)?;
    let mut rows = Vec::new();
    for kind in kinds(a.strategy) {
        let s = strategy(kind, a.r, &job, k)?;
        let u = net_utility(&job, &s, a.r, &cfg)?;
        let p = analytics::pocd(&job, &s)?.value;
        let c = analytics::cost(&job, &s)?.expected_machine_time;
        rows.push(vec![
            kind.to_string(),
            a.r.to_string(),
            num(cfg.theta),
            num(cfg.price),
            num(r_min),
            num(p),
            num(c),
            num(u),
        ]);
    }
    Ok(Table {
        header: vec![
            "strategy",
            "r",
            "theta",
            "price",
            "r_min",
            "pocd",
            "machine_time",
            "utility",
        ],
        rows,
    })
}

pub fn optimize(a: &OptimizeArgs) -> CliResult<Table> {
    let job = a.job.job()?;
    let k = a.knobs.resolve(&job);
    let cfg = a.util.config();
    cfg.validate()?;
    let params = search_params(&a.search);
    let mut rows = Vec::new();
    for kind in kinds(a.strategy) {
        let s = strategy(kind, 0, &job, k)?;
        let (o, capped) = optimize_or_cap(&job, &s, &cfg, &params)?;
        rows.push(vec![
            kind.to_string(),
            o.r_opt.to_string(),
            num(o.gamma),
            num(o.utility),
            num(o.pocd_at_opt),
            num(o.cost_at_opt),
            num(o.cost_at_opt * cfg.price),
            num(o.r_min_pocd),
            capped.to_string(),
        ]);
    }
    Ok(Table {
        header: vec![
            "strategy",
            "r_opt",
            "gamma",
            "utility",
            "pocd",
            "machine_time",
            "cost",
            "r_min",
            "capped",
        ],
        rows,
    })
}

impl SimArgs {
    fn config(&self, phi: f64) -> SimConfig {
        SimConfig {
            trials: self.trials,
            detection: match self.detection {
                DetectionArg::Oracle => Detection::Oracle,
                DetectionArg::Estimator => Detection::Estimator,
                DetectionArg::Hadoop => Detection::HadoopEstimator,
            },
            jvm_delay: self.jvm_delay,
            winner_floor: !self.no_winner_floor,
            resume_work: if self.fixed_phi {
                ResumeWork::FixedPhi(phi)
            } else {
                ResumeWork::Measured
            },
            hadoop_s_period: self.hadoop_s_period,
            mantri_period: self.mantri_period,
            mantri_gap: self.mantri_gap,
            mantri_max_extra: self.mantri_max_extra,
            seed: self.seed,
        }
    }
}

pub fn simulate(a: &SimulateArgs) -> CliResult<Table> {
    let job = a.job.job()?;
    let k = a.knobs.resolve(&job);
    let cfg = a.util.config();
    cfg.validate()?;
    let sim = a.sim.config(k.phi);
    sim.validate()?;
    let r_min = cfg.resolve_r_min(&job)?;

    let mut runs = Vec::new();
    for kind in kinds(a.strategy) {
        runs.push(strategy(kind, a.r, &job, k)?);
    }
    for b in &a.baselines {
        let kind = match b {
            BaselineArg::HadoopNs => StrategyKind::HadoopNs,
            BaselineArg::HadoopS => StrategyKind::HadoopS,
            BaselineArg::Mantri => StrategyKind::Mantri,
        };
        runs.push(StrategyConfig::baseline(kind));
    }

    let mut rows = Vec::new();
    for s in &runs {
        let analytic = |what: &str, v: Result<f64, Error>| match v {
            Ok(v) => Some(v),
            Err(e) => {
                if s.kind.has_closed_form() || s.kind == StrategyKind::HadoopNs {
                    eprintln!("warning: {}: no analytic {what}: {e}", s.kind);
                }
                None
            }
        };
        let p = analytic("pocd", analytics::pocd(&job, s).map(|p| p.value));
        let c = analytic(
            "machine time",
            analytics::cost(&job, s).map(|c| c.expected_machine_time),
        );
        let rep = run_trials(&job, s, &sim)?.with_utility(&cfg, r_min);
        let r = match s.kind {
            StrategyKind::HadoopS | StrategyKind::Mantri => String::new(),
            _ => s.r.to_string(),
        };
        rows.push(vec![
            s.kind.to_string(),
            r,
            rep.trials.to_string(),
            sim.seed.to_string(),
            opt_num(p),
            num(rep.pocd_hat),
            num(rep.pocd_stderr),
            opt_num(c),
            num(rep.mean_machine_time),
            num(rep.machine_time_stderr),
            num(rep.mean_completion_time),
            opt_num(rep.mean_phi_est),
            num(rep.straggler_rate),
            opt_num(rep.utility_hat),
        ]);
    }
    Ok(Table {
        header: vec![
            "strategy",
            "r",
            "trials",
            "seed",
            "pocd_analytic",
            "pocd_mc",
            "pocd_stderr",
            "machine_time_analytic",
            "machine_time_mc",
            "machine_time_stderr",
            "completion_time_mc",
            "phi_mc",
            "straggler_rate",
            "utility_mc",
        ],
        rows,
    })
}

pub fn compare(a: &CompareArgs) -> CliResult<Table> {
    let job = a.job.job()?;
    let k = a.knobs.resolve(&job);
    let rep = compare_strategies(&job, a.r, k.tau_est, k.phi)?;
    let rel = |i: usize| match rep.ordering[i].relation {
        std::cmp::Ordering::Greater => ">",
        std::cmp::Ordering::Less => "<",
        std::cmp::Ordering::Equal => "=",
    };
    let conclusion = |c: analytics::Conclusion| match (c.precondition_met, c.holds) {
        (false, _) => "n/a",
        (true, true) => "holds",
        (true, false) => "fails",
    };
    let row = vec![
        a.r.to_string(),
        num(k.tau_est),
        num(k.phi),
        num(rep.pocd_clone.value),
        num(rep.pocd_restart.value),
        num(rep.pocd_resume.value),
        rel(0).to_string(),
        rel(1).to_string(),
        rel(2).to_string(),
        conclusion(rep.clone_beats_restart).to_string(),
        conclusion(rep.resume_beats_restart).to_string(),
        num(rep.clone_vs_resume_threshold),
        rep.clone_vs_resume_crossover
            .map(|r| r.to_string())
            .unwrap_or_default(),
    ];
    Ok(Table {
        header: vec![
            "r",
            "tau_est",
            "phi",
            "pocd_clone",
            "pocd_s_restart",
            "pocd_s_resume",
            "clone_vs_s_restart",
            "s_resume_vs_s_restart",
            "clone_vs_s_resume",
            "clone_beats_s_restart",
            "s_resume_beats_s_restart",
            "clone_vs_s_resume_threshold",
            "clone_vs_s_resume_crossover",
        ],
        rows: vec![row],
    })
}

fn grid(a: &SweepArgs) -> CliResult<Vec<f64>> {
    if !(a.from.is_finite() && a.to.is_finite()) {
        return Err(CliError::Usage("--from and --to must be finite".into()));
    }
    if a.log && !(a.from > 0.0 && a.to > 0.0) {
        return Err(CliError::Usage("--log needs --from and --to > 0".into()));
    }
    if a.steps == 0 {
        return Ok(vec![a.from]);
    }
    let n = a.steps as f64;
    Ok((0..=a.steps)
        .map(|i| {
            let f = i as f64 / n;
            if i == a.steps {
                a.to
            } else if a.log {
                (a.from.ln() + f * (a.to.ln() - a.from.ln())).exp()
            } else {
                a.from + f * (a.to - a.from)
            }
        })
        .collect())
}

struct SweepPoint {
    opt: OptimizationResult,
    capped: bool,
    mc: Option<SimReport>,
}

fn sweep_point(a: &SweepArgs, v: f64, kind: StrategyKind) -> CliResult<SweepPoint> {
    let mut job_args = a.job.clone();
    let mut knobs = a.knobs.clone();
    let mut util = a.util.clone();
    match a.sweep {
        SweepVar::Theta => util.theta = v,
        SweepVar::Beta => job_args.beta = Some(v),
        SweepVar::TauEst => knobs.tau_est = Some(v),
        SweepVar::TauKill => knobs.tau_kill = Some(v),
        SweepVar::Deadline => {
            job_args.deadline = Some(v);
            job_args.deadline_multiple = None;
        }
    }
    let job = job_args.job()?;
    let k = knobs.resolve(&job);
    let cfg = util.config();
    cfg.validate()?;
    let s = strategy(kind, 0, &job, k)?;
    let (opt, capped) = optimize_or_cap(&job, &s, &cfg, &search_params(&a.search))?;
    let mc = match a.trials {
        Some(trials) => {
            let sim = SimConfig {
                trials,
                seed: a.seed,
                ..SimConfig::default()
            };
            Some(run_trials(&job, &s.with_r(opt.r_opt), &sim)?)
        }
        None => None,
    };
    Ok(SweepPoint { opt, capped, mc })
}

pub fn sweep(a: &SweepArgs) -> CliResult<Table> {
    if a.sweep != SweepVar::Beta {
        a.job.beta()?;
    }
    if a.sweep != SweepVar::Deadline
        && a.job.deadline.is_none()
        && a.job.deadline_multiple.is_none()
    {
        return Err(CliError::Usage(
            "missing required flag --deadline (or --deadline-multiple)".into(),
        ));
    }
    let values = grid(a)?;
    let kinds = kinds(a.strategy);
    let points: Vec<(f64, StrategyKind)> = values
        .iter()
        .flat_map(|&v| kinds.iter().map(move |&k| (v, k)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(v, kind)| {
            let mut row = vec![a.sweep.as_str().to_string(), num(v), kind.to_string()];
            match sweep_point(a, v, kind) {
                Ok(p) => {
                    row.extend([
                        p.opt.r_opt.to_string(),
                        num(p.opt.gamma),
                        num(p.opt.utility),
                        num(p.opt.pocd_at_opt),
                        num(p.opt.cost_at_opt),
                        opt_num(p.mc.map(|m| m.pocd_hat)),
                        opt_num(p.mc.map(|m| m.pocd_stderr)),
                        opt_num(p.mc.map(|m| m.mean_machine_time)),
                        if p.capped { "capped" } else { "ok" }.to_string(),
                    ]);
                }
                Err(e) => {
                    row.extend(std::iter::repeat(String::new()).take(8));
                    row.push(e.to_string());
                }
            }
            row
        })
        .collect();
    Ok(Table {
        header: vec![
            "sweep",
            "value",
            "strategy",
            "r_opt",
            "gamma",
            "utility",
            "pocd",
            "machine_time",
            "pocd_mc",
            "pocd_stderr",
            "machine_time_mc",
            "status",
        ],
        rows,
    })
}

pub fn trace_run(a: &TraceRunArgs) -> CliResult<Vec<ResultRow>> {
    let jobs = load_trace(&a.trace)?;
    let prices = a.prices.as_ref().map(load_prices).transpose()?;
    let kinds = kinds(a.strategy);
    let params = search_params(&a.search);

    let per_job: Vec<CliResult<Vec<ResultRow>>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let price = prices
                .as_deref()
                .and_then(|p| price_at(p, job.submit_time))
                .unwrap_or(job.price);
            let job = JobSpec {
                price,
                ..job.clone()
            };
            let t = job.dist.t_min();
            let tau_est = a.tau_est_frac * t;
            let k = Knobs {
                tau_est,
                tau_kill: a.tau_kill_frac * t,
                phi: a.phi.unwrap_or_else(|| default_phi(&job, tau_est)),
            };
            let cfg = UtilityConfig {
                theta: a.theta,
                r_min_pocd: a.rmin,
                log_base: a.log_base,
                price,
            };
            let seed = a.seed.wrapping_add(i as u64);
            kinds
                .iter()
                .map(|&kind| {
                    let ctx = |source| CliError::Job {
                        job: job.job_id.clone(),
                        strategy: kind.as_str(),
                        source,
                    };
                    let s = strategy(kind, 0, &job, k).map_err(|e| match e {
                        CliError::Domain(source) => ctx(source),
                        other => other,
                    })?;
                    let (o, _) = optimize_or_cap(&job, &s, &cfg, &params).map_err(ctx)?;
                    let mc = match a.trials {
                        Some(trials) => {
                            let sim = SimConfig {
                                trials,
                                seed,
                                ..SimConfig::default()
                            };
                            Some(run_trials(&job, &s.with_r(o.r_opt), &sim).map_err(ctx)?)
                        }
                        None => None,
                    };
                    Ok(ResultRow {
                        job_id: job.job_id.clone(),
                        strategy: kind.to_string(),
                        r_opt: o.r_opt,
                        pocd_analytic: o.pocd_at_opt,
                        cost_analytic: o.cost_at_opt * price,
                        utility: o.utility,
                        pocd_mc: mc.map(|m| m.pocd_hat),
                        cost_mc: mc.map(|m| m.mean_machine_time * price),
                        seed: mc.map(|_| seed),
                    })
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    Ok(rows)
}
