use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use wflab_bench::{sigmoid, unit_jump};
use wflab_core::{estimate_semigroup, sample_tilted, Observable, SimConfig, TargetSet, TiltConfig};

const PATHS: usize = 10_000;

fn bench_plain(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_semigroup");
    group.sample_size(10);
    group.throughput(Throughput::Elements(PATHS as u64));
    let f = Observable::Indicator { target: TargetSet::interval(1.0, 3.0) };
    for (name, k) in [("unit_jump", unit_jump()), ("sigmoid", sigmoid())] {
        for h in [0.1, 0.02] {
            let cfg = SimConfig::new(h, 1.0, vec![0.0], PATHS, 1);
            group.bench_with_input(BenchmarkId::new(name, h), &cfg, |b, cfg| {
                b.iter(|| estimate_semigroup(&k, cfg, &f).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_tilted(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_tilted");
    group.sample_size(10);
    group.throughput(Throughput::Elements(PATHS as u64));
    let k = unit_jump();
    let f = Observable::Indicator { target: TargetSet::interval(1.5, 2.5) };
    let tilt = TiltConfig::new(vec![2.5f64.ln()], vec![0.0]);
    for h in [0.1, 0.02] {
        let cfg = SimConfig::new(h, 1.0, vec![0.0], PATHS, 2);
        group.bench_with_input(BenchmarkId::new("unit_jump", h), &cfg, |b, cfg| {
            b.iter(|| sample_tilted(&k, cfg, &tilt, &f).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_plain, bench_tilted);
criterion_main!(benches);
