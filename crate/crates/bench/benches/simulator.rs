use std::hint::black_box;

use chronos_bench::{large_job, sim, small_job, strategies};
use chronos_core::{run_trials, StrategyConfig, StrategyKind};
use criterion::{criterion_group, criterion_main, Criterion};

fn strategies_at_scale(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_trials");
    group.sample_size(10);
    let cfg = sim(10_000);
    for (name, job) in [("small", small_job()), ("large", large_job())] {
        for s in strategies(&job, 2) {
            group.bench_function(format!("{name}/{}", s.kind), |b| {
                b.iter(|| run_trials(black_box(&job), &s, &cfg))
            });
        }
        for kind in [
            StrategyKind::HadoopNs,
            StrategyKind::HadoopS,
            StrategyKind::Mantri,
        ] {
            let s = StrategyConfig::baseline(kind);
            group.bench_function(format!("{name}/{kind}"), |b| {
                b.iter(|| run_trials(black_box(&job), &s, &cfg))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, strategies_at_scale);
criterion_main!(benches);
