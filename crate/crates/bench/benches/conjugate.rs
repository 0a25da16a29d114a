use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use wflab_bench::{kernels, unit_jump};
use wflab_core::{build_minorant, legendre};

fn bench_legendre(c: &mut Criterion) {
    let mut group = c.benchmark_group("legendre");
    for (name, k) in kernels() {
        let x = vec![0.1; k.dim];
        let alpha = vec![0.7; k.dim];
        group.bench_with_input(BenchmarkId::from_parameter(name), &k, |b, k| {
            b.iter(|| legendre(k, black_box(&x), black_box(&alpha)).unwrap())
        });
    }
    group.finish();
}

fn bench_minorant(c: &mut Criterion) {
    let k = unit_jump();
    let mut group = c.benchmark_group("minorant");
    group.sample_size(10);
    for chi in [0.1, 0.01] {
        group.bench_with_input(BenchmarkId::new("unit_jump", chi), &chi, |b, &chi| {
            b.iter(|| build_minorant(&k, &[0.0], 2.0, chi).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_legendre, bench_minorant);
criterion_main!(benches);
