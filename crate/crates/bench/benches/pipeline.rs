//! Benchmarks of the end-to-end stages: panel simulation, backtesting, and
//! relative-return decomposition at the default desk scale.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dgp_bench::fixture_panel;
use dgp_core::backtest::{run_backtest, RebalanceSchedule};
use dgp_core::decomposition::DecompositionKind;
use dgp_core::dispersion::DispersionMeasure;
use dgp_core::portfolio::StrategyKind;
use dgp_core::simulator::{simulate, SimConfig};

fn bench_simulate(c: &mut Criterion) {
    let cfg = SimConfig::uniform(10, 5.0, 252, 0.05, 0.2).with_seed(77);
    c.bench_function("simulate/10_assets_5y_daily", |b| {
        b.iter(|| simulate(black_box(&cfg)).unwrap())
    });
}

fn bench_backtest(c: &mut Criterion) {
    let panel = fixture_panel();
    let strategies = [
        ("equal", StrategyKind::Equal),
        ("ces", StrategyKind::parse("ces:gamma=-0.5").expect("valid spec")),
    ];
    let mut group = c.benchmark_group("backtest_monthly_5y");
    for (name, strat) in &strategies {
        group.bench_function(*name, |b| {
            b.iter(|| {
                run_backtest(black_box(&panel), strat, RebalanceSchedule::Monthly, 1.0).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_decompose(c: &mut Criterion) {
    let panel = fixture_panel();
    let strat = StrategyKind::Equal;
    let res = run_backtest(&panel, &strat, RebalanceSchedule::EveryStep, 1.0)
        .expect("backtest succeeds");
    let measure = DispersionMeasure::NegGeometricMean;
    c.bench_function("decompose/equal_daily_4y", |b| {
        b.iter(|| {
            res.decompose(black_box(&measure), DecompositionKind::Log)
                .unwrap()
        })
    });
}

criterion_group!(pipeline, bench_simulate, bench_backtest, bench_decompose);
criterion_main!(pipeline);
