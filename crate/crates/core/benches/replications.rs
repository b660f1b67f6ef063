use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dcftp::analytics::{forward_coalescence_rep, MmcParams};
use dcftp::par::{run_replications, run_sequential};
use dcftp::{sample_stationary, DcftpConfig, DistributionSpec};

fn sampler(c: &mut Criterion) {
    let config = DcftpConfig::new(
        DistributionSpec::erlang(2, 6.0),
        DistributionSpec::uniform(0.2, 0.8),
        2,
    )
    .with_seed(1);
    let reps = 200;
    let mut group = c.benchmark_group("stationary_draws");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", reps), |b| {
        b.iter(|| run_sequential(reps, |r| sample_stationary(&config, r).unwrap()))
    });
    group.bench_function(BenchmarkId::new("parallel", reps), |b| {
        b.iter(|| run_replications(reps, 0, |r| sample_stationary(&config, r).unwrap()))
    });
    group.finish();
}

fn coalescence(c: &mut Criterion) {
    let params = MmcParams::new(100.0, 1.0, 120).unwrap();
    let reps = 200;
    let mut group = c.benchmark_group("forward_coalescence");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", reps), |b| {
        b.iter(|| run_sequential(reps, |r| forward_coalescence_rep(&params, 1, r)))
    });
    group.bench_function(BenchmarkId::new("parallel", reps), |b| {
        b.iter(|| run_replications(reps, 0, |r| forward_coalescence_rep(&params, 1, r)))
    });
    group.finish();
}

criterion_group!(benches, sampler, coalescence);
criterion_main!(benches);
