use chronos_core::*;

fn sim(trials: u64, seed: u64) -> SimConfig {
    SimConfig {
        trials,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn clone_worked_example_matches_closed_form() {
    let job = JobSpec::simple(1.0, 1.5, 2.0, 10).unwrap();
    let s = StrategyConfig::clone_attempts(1, 1.0);
    let rep = run_trials(&job, &s, &sim(1_000_000, 11)).unwrap();
    let exact = pocd_clone(&job, 1).unwrap().value;
    assert!((exact - 0.2631).abs() < 5e-5, "{exact}");
    assert!(
        (rep.pocd_hat - exact).abs() <= 3.0 * rep.pocd_stderr,
        "{} vs {exact} (se {})",
        rep.pocd_hat,
        rep.pocd_stderr
    );
    let cost = cost_clone(&job, 1, 1.0).unwrap().expected_machine_time;
    assert!((rep.mean_machine_time / cost - 1.0).abs() < 0.01);
}

#[test]
fn restart_straggler_accounting_decomposes() {
    let job = JobSpec::simple(1.0, 1.5, 2.0, 1).unwrap();
    let (tau, tk, r) = (0.3, 1.2, 3u32);
    let s = StrategyConfig::s_restart(r, tau, tk);
    let cfg = sim(1, 0);
    let mut checked = 0;
    for i in 0..10_000 {
        let tr = simulate_job_traced(&job, &s, &cfg, SampleStream::new(5, i)).unwrap();
        let attempts = &tr.attempts[0];
        let total: f64 = attempts.iter().map(|a| a.machine_time()).sum();
        assert!((total - tr.outcome.machine_time).abs() < 1e-9);
        let t1 = attempts[0].total_work;
        if t1 <= job.deadline {
            assert_eq!(attempts.len(), 1);
            assert!((total - t1).abs() < 1e-12);
            continue;
        }
        assert_eq!(attempts.len(), r as usize + 1);
        let w = attempts[1..]
            .iter()
            .map(|a| a.total_work)
            .fold(t1 - tau, f64::min);
        let expected = tau + r as f64 * (tk - tau) + w;
        assert!(
            (total - expected).abs() < 1e-9,
            "trial {i}: {total} vs {expected}"
        );
        checked += 1;
    }
    assert!(checked > 2_000, "{checked}");
}

#[test]
fn measured_phi_matches_conditional_expectation() {
    let (t, beta, d, tau) = (1.0, 1.5, 2.0, 0.3);
    let job = JobSpec::simple(t, beta, d, 10).unwrap();
    let s = StrategyConfig::s_resume(2, tau, 1.0, 0.0);
    let rep = run_trials(&job, &s, &sim(100_000, 2)).unwrap();
    let expected = tau * beta / ((beta + 1.0) * d);
    let got = rep.mean_phi_est.unwrap();
    assert!((got / expected - 1.0).abs() < 0.01, "{got} vs {expected}");
}

#[test]
fn estimator_is_exact_without_startup_delay() {
    let p = ParetoParams::new(2.0, 1.3).unwrap();
    let tau = 1.5;
    for i in 0..10_000 {
        let mut rng = SampleStream::new(9, i).rng();
        let t = model::pareto_sample(&mut rng, &p);
        let cp = tau / t;
        let est = estimate_completion(0.0, 0.0, tau, 0.0, cp).unwrap();
        assert!((est - t).abs() < 1e-9, "{est} vs {t}");
    }
}

#[test]
fn hadoop_estimate_overshoots_with_startup_delay() {
    let p = ParetoParams::new(2.0, 1.3).unwrap();
    let (jvm, tau) = (0.5, 1.5);
    for i in 0..10_000 {
        let mut rng = SampleStream::new(10, i).rng();
        let t = model::pareto_sample(&mut rng, &p);
        let cp = (tau - jvm) / t;
        let chronos = estimate_completion(0.0, jvm, tau, 0.0, cp).unwrap();
        let hadoop = hadoop_estimate(0.0, tau, cp).unwrap();
        assert!((chronos - (jvm + t)).abs() < 1e-9);
        assert!(hadoop > chronos);
    }
}

#[test]
fn oracle_and_estimator_agree_without_startup_delay() {
    let job = JobSpec::simple(1.0, 1.5, 2.0, 10).unwrap();
    let strategies = [
        StrategyConfig::s_restart(2, 0.3, 1.0),
        StrategyConfig::s_resume(2, 0.3, 1.0, 0.0),
    ];
    for s in strategies {
        for i in 0..2_000 {
            let oracle = simulate_job(&job, &s, &sim(1, 0), SampleStream::new(4, i)).unwrap();
            let est_cfg = SimConfig {
                detection: Detection::Estimator,
                ..sim(1, 0)
            };
            let est = simulate_job(&job, &s, &est_cfg, SampleStream::new(4, i)).unwrap();
            assert_eq!(oracle.met_deadline, est.met_deadline);
            assert!((oracle.machine_time - est.machine_time).abs() < 1e-9);
        }
    }
}

#[test]
fn hadoop_s_dominates_no_speculation() {
    for (t, beta, mult, n) in [
        (1.0, 1.1, 2.0, 10),
        (5.0, 1.3, 1.5, 20),
        (2.0, 1.5, 3.0, 50),
    ] {
        let job = JobSpec::simple(t, beta, mult * t * beta / (beta - 1.0), n).unwrap();
        let cfg = sim(100_000, 6);
        let ns = run_trials(
            &job,
            &StrategyConfig::baseline(StrategyKind::HadoopNs),
            &cfg,
        )
        .unwrap();
        let hs = run_trials(&job, &StrategyConfig::baseline(StrategyKind::HadoopS), &cfg).unwrap();
        assert!(
            hs.pocd_hat >= ns.pocd_hat,
            "{} < {}",
            hs.pocd_hat,
            ns.pocd_hat
        );
        for i in 0..500 {
            let a = simulate_job(
                &job,
                &StrategyConfig::baseline(StrategyKind::HadoopNs),
                &cfg,
                SampleStream::new(6, i),
            )
            .unwrap();
            let b = baseline_hadoop_s(&job, &cfg, SampleStream::new(6, i)).unwrap();
            assert!(b.completion_time <= a.completion_time);
        }
    }
}

#[test]
fn hadoop_s_with_identical_tasks_never_speculates() {
    // a huge shape collapses every sample onto t_min
    let job = JobSpec::simple(3.0, 1e300, 10.0, 8).unwrap();
    for i in 0..100 {
        let out = baseline_hadoop_s(&job, &sim(1, 0), SampleStream::new(1, i)).unwrap();
        assert!(out
            .tasks
            .iter()
            .all(|t| t.attempts_launched == 1 && !t.straggler));
        assert_eq!(out.machine_time, 24.0);
    }
}

#[test]
fn mantri_ignores_the_deadline() {
    let job = JobSpec::simple(5.0, 1.2, 40.0, 10).unwrap();
    let far = job.with_deadline(400.0);
    let cfg = sim(20_000, 8);
    let s = StrategyConfig::baseline(StrategyKind::Mantri);
    let a = run_trials(&job, &s, &cfg).unwrap();
    let b = run_trials(&far, &s, &cfg).unwrap();
    assert_eq!(a.mean_machine_time, b.mean_machine_time);
    assert_eq!(a.mean_completion_time, b.mean_completion_time);
    assert!(a.pocd_hat < b.pocd_hat);
}

#[test]
fn mantri_without_extras_is_plain_hadoop() {
    let job = JobSpec::simple(5.0, 1.2, 40.0, 10).unwrap();
    let cfg = SimConfig {
        mantri_max_extra: 0,
        ..sim(20_000, 8)
    };
    let m = run_trials(&job, &StrategyConfig::baseline(StrategyKind::Mantri), &cfg).unwrap();
    let ns = run_trials(
        &job,
        &StrategyConfig::baseline(StrategyKind::HadoopNs),
        &cfg,
    )
    .unwrap();
    assert_eq!(m.pocd_hat, ns.pocd_hat);
    assert!((m.mean_machine_time - ns.mean_machine_time).abs() < 1e-9 * ns.mean_machine_time);
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let job = JobSpec::simple(2.0, 1.4, 6.0, 10).unwrap();
    let cfg = SimConfig {
        jvm_delay: 0.2,
        detection: Detection::Estimator,
        ..sim(10_000, 77)
    };
    let strategies = [
        StrategyConfig::clone_attempts(2, 1.5),
        StrategyConfig::s_restart(2, 0.6, 1.6),
        StrategyConfig::s_resume(2, 0.6, 1.6, 0.0),
        StrategyConfig::baseline(StrategyKind::HadoopS),
        StrategyConfig::baseline(StrategyKind::Mantri),
    ];
    for s in strategies {
        let reports: Vec<SimReport> = [1, 2, 5]
            .iter()
            .map(|&n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .unwrap()
                    .install(|| run_trials(&job, &s, &cfg).unwrap())
            })
            .collect();
        assert_eq!(reports[0], reports[1]);
        assert_eq!(reports[0], reports[2]);
        assert_eq!(reports[0], run_trials(&job, &s, &cfg).unwrap());
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let job = JobSpec::simple(1.0, 1.5, 2.0, 10).unwrap();
    let bad = SimConfig {
        trials: 0,
        ..SimConfig::default()
    };
    assert!(run_trials(&job, &StrategyConfig::clone_attempts(1, 1.0), &bad).is_err());
    let bad = SimConfig {
        jvm_delay: -1.0,
        ..SimConfig::default()
    };
    assert!(run_trials(&job, &StrategyConfig::clone_attempts(1, 1.0), &bad).is_err());
}
