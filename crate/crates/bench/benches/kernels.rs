//! Benchmarks of the per-evaluation kernels: measure values, gradients,
//! Hessians, and generated portfolio weights across universe sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dgp_bench::fixture_theta;
use dgp_core::dispersion::DispersionMeasure;
use dgp_core::portfolio::generated_shares;
use dgp_core::simplex::RelativePriceVector;

fn measures() -> Vec<(&'static str, DispersionMeasure)> {
    vec![
        ("neg_geo", DispersionMeasure::NegGeometricMean),
        ("neg_ces", DispersionMeasure::neg_ces(-0.5).expect("valid exponent")),
    ]
}

fn bench_value(c: &mut Criterion) {
    let mut group = c.benchmark_group("value");
    for n in [10, 30, 100] {
        let theta = fixture_theta(n);
        for (name, m) in measures() {
            group.bench_with_input(BenchmarkId::new(name, n), &theta, |b, t| {
                b.iter(|| m.value(black_box(t)).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradient");
    for n in [10, 30, 100] {
        let theta = fixture_theta(n);
        for (name, m) in measures() {
            group.bench_with_input(BenchmarkId::new(name, n), &theta, |b, t| {
                b.iter(|| m.gradient(black_box(t)).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_hessian(c: &mut Criterion) {
    let mut group = c.benchmark_group("hessian");
    for n in [10, 30, 100] {
        let theta = fixture_theta(n);
        for (name, m) in measures() {
            group.bench_with_input(BenchmarkId::new(name, n), &theta, |b, t| {
                b.iter(|| m.hessian(black_box(t)).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_generated_shares(c: &mut Criterion) {
    let mut group = c.benchmark_group("generated_shares");
    for n in [10, 30, 100] {
        let theta = RelativePriceVector::new(fixture_theta(n)).expect("interior point");
        for (name, m) in measures() {
            group.bench_with_input(BenchmarkId::new(name, n), &theta, |b, t| {
                b.iter(|| generated_shares(&m, black_box(t), 1.0).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(
    kernels,
    bench_value,
    bench_gradient,
    bench_hessian,
    bench_generated_shares
);
criterion_main!(kernels);
