use std::cmp::Ordering;

use chronos_core::analytics::{compare_pocd, CROSSOVER_SCAN_MAX};
use chronos_core::model::pareto_sample;
use chronos_core::{
    compare_strategies, cost_clone, cost_s_restart, cost_s_resume, pocd_clone, pocd_s_restart,
    pocd_s_resume, restart_tail_integral, JobSpec, SampleStream,
};
use proptest::prelude::*;

const TRIALS: usize = 1_000_000;

fn job(t: f64, b: f64, d: f64, n: u32) -> JobSpec {
    JobSpec::simple(t, b, d, n).unwrap()
}

#[test]
fn clone_pocd_matches_monte_carlo() {
    let j = job(1.0, 1.5, 2.0, 10);
    let want = pocd_clone(&j, 1).unwrap().value;
    assert!((want - 0.2630755761638284).abs() < 1e-15);
    let mut rng = SampleStream::new(31, 0).rng();
    let met = (0..TRIALS)
        .filter(|_| {
            (0..10).all(|_| {
                let a = pareto_sample(&mut rng, &j.dist);
                let b = pareto_sample(&mut rng, &j.dist);
                a.min(b) <= 2.0
            })
        })
        .count() as f64
        / TRIALS as f64;
    let se = (want * (1.0 - want) / TRIALS as f64).sqrt();
    assert!((met - want).abs() <= 3.0 * se, "{met} vs {want}");
}

#[test]
fn tail_integral_matches_trapezoid_oracle() {
    let (t, b, d, tau, r) = (1.0, 2.0, 4.0, 1.0, 1u32);
    let v = restart_tail_integral(&job(t, b, d, 1), r, tau).unwrap();
    // u = 1/w: D^b t^(br) int_0^(1/(D-tau)) u^(b(r+1)-2) (1 + tau u)^(-b) du
    let hi = 1.0 / (d - tau);
    let steps = 200_000;
    let h = hi / steps as f64;
    let f = |u: f64| {
        d.powf(b)
            * t.powf(b * r as f64)
            * u.powf(b * (r as f64 + 1.0) - 2.0)
            * (1.0 + tau * u).powf(-b)
    };
    let trap = h * ((1..steps).map(|i| f(i as f64 * h)).sum::<f64>() + 0.5 * (f(0.0) + f(hi)));
    assert!((v - trap).abs() < 1e-8, "{v} vs {trap}");
    assert!((v - 0.12750701487634367).abs() < 1e-10);
}

#[test]
fn restart_cost_matches_monte_carlo_accounting() {
    let (t, b, d, tau, tk, r) = (1.0, 2.0, 4.0, 1.0, 2.0, 2u32);
    let j = job(t, b, d, 1);
    let want = cost_s_restart(&j, r, tau, tk)
        .unwrap()
        .expected_machine_time;
    assert!((want - 1.7705680064891727).abs() < 1e-9);
    let mut rng = SampleStream::new(41, 0).rng();
    let total: f64 = (0..TRIALS)
        .map(|_| {
            let t1 = pareto_sample(&mut rng, &j.dist);
            if t1 <= d {
                return t1;
            }
            let winner = (0..r)
                .map(|_| pareto_sample(&mut rng, &j.dist))
                .fold(t1 - tau, f64::min);
            tau + r as f64 * (tk - tau) + winner
        })
        .sum();
    let mc = total / TRIALS as f64;
    assert!((mc / want - 1.0).abs() < 0.01, "{mc} vs {want}");
}

#[test]
fn resume_cost_matches_monte_carlo_with_winner_floor() {
    let (t, b, d, tau, tk, phi, r) = (1.0, 2.0, 4.0, 1.0, 2.0, 0.5, 1u32);
    let j = job(t, b, d, 1);
    let want = cost_s_resume(&j, r, tau, tk, phi)
        .unwrap()
        .expected_machine_time;
    assert!((want - 1.6888020833333333).abs() < 1e-12);
    let mut rng = SampleStream::new(43, 0).rng();
    let total: f64 = (0..TRIALS)
        .map(|_| {
            let t1 = pareto_sample(&mut rng, &j.dist);
            if t1 <= d {
                return t1;
            }
            let winner = (0..=r)
                .map(|_| ((1.0 - phi) * pareto_sample(&mut rng, &j.dist)).max(t))
                .fold(f64::INFINITY, f64::min);
            tau + r as f64 * (tk - tau) + winner
        })
        .sum();
    let mc = total / TRIALS as f64;
    assert!((mc / want - 1.0).abs() < 0.01, "{mc} vs {want}");
}

#[test]
fn clone_resume_crossover_example() {
    let j = job(1.0, 2.0, 4.0, 1);
    let rep = compare_strategies(&j, 1, 1.0, 0.5).unwrap();
    assert!((rep.clone_vs_resume_threshold - -6.128533874054364).abs() < 1e-12);
    // Both PoCDs round to 1.0 for r >= 13, so take the difference on the
    // miss probabilities 1 - (1 - f)^N, computed without cancellation.
    let miss = |f: f64| -(j.num_tasks as f64 * (-f).ln_1p()).exp_m1();
    let sign_change = (0..=CROSSOVER_SCAN_MAX).find(|&r| {
        let c = miss(pocd_clone(&j, r).unwrap().per_task_failure);
        let s = miss(pocd_s_resume(&j, r, 1.0, 0.5).unwrap().per_task_failure);
        s - c >= 0.0
    });
    assert_eq!(rep.clone_vs_resume_crossover, sign_change);
}

fn grid_point() -> impl Strategy<Value = (JobSpec, u32, f64, f64)> {
    (
        1.1f64..2.5,
        1.0f64..20.0,
        1.5f64..5.0,
        prop::sample::select(vec![1u32, 10, 100]),
        0u32..6,
        0.01f64..0.99,
        0.0f64..0.9,
    )
        .prop_map(|(b, t, ratio, n, r, tau_frac, phi)| {
            let d = t * ratio;
            (job(t, b, d, n), r, tau_frac * (d - t), phi)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn pocd_is_monotone((j, r, tau, phi) in grid_point()) {
        let all = |j: &JobSpec, r| [
            pocd_clone(j, r).unwrap(),
            pocd_s_restart(j, r, tau).unwrap(),
            pocd_s_resume(j, r, tau, phi).unwrap(),
        ];
        let base = all(&j, r);
        for (a, b) in base.iter().zip(all(&j, r + 1)) {
            prop_assert!(b.value >= a.value);
        }
        for (a, b) in base.iter().zip(all(&j.with_deadline(j.deadline * 1.3), r)) {
            prop_assert!(b.value >= a.value);
        }
        let mut more = j.clone();
        more.num_tasks += 5;
        for (a, b) in base.iter().zip(all(&more, r)) {
            prop_assert!(b.value <= a.value);
        }
        for p in base {
            prop_assert!((p.value - (1.0 - p.per_task_failure).powi(j.num_tasks as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn anchor_identities((j, r, tau, _phi) in grid_point()) {
        let c = pocd_clone(&j, r).unwrap().value;
        prop_assert!((pocd_s_restart(&j, r, 0.0).unwrap().value - c).abs() <= 1e-12 * c.max(1e-300));
        let c1 = pocd_clone(&j, r + 1).unwrap().value;
        prop_assert!((pocd_s_resume(&j, r, 0.0, 0.0).unwrap().value - c1).abs() <= 1e-12 * c1.max(1e-300));
        let c0 = pocd_clone(&j, 0).unwrap().value;
        prop_assert_eq!(pocd_s_restart(&j, 0, tau).unwrap().value, c0);
    }

    #[test]
    fn costs_cover_minimum_work((j, r, tau, phi) in grid_point(), kill in 0.05f64..1.0) {
        let tk = tau + kill * j.dist.t_min().min(j.deadline - tau);
        let floor = j.num_tasks as f64 * j.dist.t_min();
        for c in [
            cost_clone(&j, r, tk).unwrap(),
            cost_s_restart(&j, r, tau, tk).unwrap(),
            cost_s_resume(&j, r, tau, tk, phi).unwrap(),
        ] {
            prop_assert!(c.expected_machine_time >= floor);
            prop_assert_eq!(c.expected_dollars, c.expected_machine_time * j.price);
        }
    }

    #[test]
    fn tail_integral_r0_identity((j, _r, tau, _phi) in grid_point()) {
        let v = restart_tail_integral(&j, 0, tau).unwrap();
        let want = j.deadline / (j.dist.beta() - 1.0);
        prop_assert!((v / want - 1.0).abs() < 1e-8, "{} vs {}", v, want);
    }

    #[test]
    fn comparison_conclusions_hold((j, r, tau, phi) in grid_point()) {
        prop_assume!(r >= 1 && tau > 0.0);
        let rep = compare_strategies(&j, r, tau, phi).unwrap();
        prop_assert!(rep.clone_beats_restart.precondition_met && rep.clone_beats_restart.holds);
        if rep.resume_beats_restart.precondition_met && phi > 0.0 {
            prop_assert!(rep.resume_beats_restart.holds);
        }
        let direct = [
            compare_pocd(&rep.pocd_clone, &rep.pocd_restart),
            compare_pocd(&rep.pocd_resume, &rep.pocd_restart),
            compare_pocd(&rep.pocd_clone, &rep.pocd_resume),
        ];
        for (o, d) in rep.ordering.iter().zip(direct) {
            prop_assert_eq!(o.relation, d);
            if o.relation == Ordering::Greater {
                prop_assert!(o.to_string().contains(" > "));
            }
        }
    }
}
