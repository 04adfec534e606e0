use std::hint::black_box;

use chronos_bench::{large_job, small_job, strategies, utility};
use chronos_core::{brute_force_r, cost, optimize_r, pocd, OptimizerParams};
use criterion::{criterion_group, criterion_main, Criterion};

fn closed_forms(c: &mut Criterion) {
    let job = small_job();
    for s in strategies(&job, 3) {
        c.bench_function(&format!("pocd/{}", s.kind), |b| {
            b.iter(|| pocd(black_box(&job), black_box(&s)))
        });
        c.bench_function(&format!("cost/{}", s.kind), |b| {
            b.iter(|| cost(black_box(&job), black_box(&s)))
        });
    }
}

fn optimizer(c: &mut Criterion) {
    let params = OptimizerParams::default();
    let cfg = utility();
    for (name, job) in [("small", small_job()), ("large", large_job())] {
        for s in strategies(&job, 0) {
            c.bench_function(&format!("optimize/{name}/{}", s.kind), |b| {
                b.iter(|| optimize_r(black_box(&job), &s, &cfg, &params))
            });
        }
    }
    let job = small_job();
    let s = strategies(&job, 0)[2];
    c.bench_function("brute_force/small/s-resume", |b| {
        b.iter(|| brute_force_r(black_box(&job), &s, &cfg, 200))
    });
}

criterion_group!(benches, closed_forms, optimizer);
criterion_main!(benches);
