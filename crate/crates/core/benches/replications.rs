//! Replication throughput: rayon work-stealing vs the sequential fallback.
//!
//! Both paths produce byte-identical metric tables (each replication owns
//! its seeded RNG stream); this measures the speedup alone. Run with
//! `cargo bench -p mtsi-core`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mtsi_core::sim::{
    run_experiment, run_experiment_sequential, LambdaRule, Method, SimConfig, SolverSettings,
};

fn config(replications: usize) -> SimConfig {
    SimConfig {
        n: 150,
        p: 30,
        k: 3,
        rho: 0.3,
        s_global: 0.85,
        s_task: 0.2,
        sigma: 1.0,
        alpha: 0.1,
        replications,
        master_seed: 7,
        lambda: LambdaRule::Fixed(60.0),
        solver: SolverSettings::default(),
    }
}

fn bench_replications(c: &mut Criterion) {
    let methods = [
        Method::MtlSi { scale: 1.0 },
        Method::DataSplit { fraction: 0.5 },
    ];
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for reps in [16usize, 64] {
        let cfg = config(reps);
        group.bench_with_input(BenchmarkId::new("parallel", reps), &cfg, |b, cfg| {
            b.iter(|| run_experiment(cfg, &methods).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", reps), &cfg, |b, cfg| {
            b.iter(|| run_experiment_sequential(cfg, &methods).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_replications);
criterion_main!(benches);
