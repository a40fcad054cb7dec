//! Compares the rayon-backed batch entry points against their sequential
//! fallbacks on the two hot paths: scenario sampling and day simulation.
//! With a single-core runner or `STATIONFORGE_THREADS=1` the two should be
//! close; with more cores the parallel path should win.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stationforge::opsim::{
    simulate_days, simulate_days_seq, OperationPolicy, SimulationSetup,
};
use stationforge::planner::{CasePreset, GridLimits};
use stationforge::scenario::{
    estimate_bound_distributions, sample_scenarios, sample_scenarios_seq, BehaviorModel,
};
use stationforge::{ChargerSpec, ParamForm, TimeGrid};

fn bench_sampling(c: &mut Criterion) {
    let grid = TimeGrid::daily(0.5).unwrap();
    let model = BehaviorModel::default();
    let mut group = c.benchmark_group("sample_scenarios");
    for &n in &[32usize, 128] {
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| sample_scenarios(&model, &grid, 7, n).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| sample_scenarios_seq(&model, &grid, 7, n).unwrap())
        });
    }
    group.finish();
}

fn bench_bound_estimation(c: &mut Criterion) {
    let grid = TimeGrid::daily(0.5).unwrap();
    let model = BehaviorModel::default();
    let charger = ChargerSpec::default();
    let scenarios = sample_scenarios(&model, &grid, 7, 64).unwrap();
    c.bench_function("estimate_bound_distributions/64", |b| {
        b.iter(|| {
            estimate_bound_distributions(&scenarios, &charger, &grid, ParamForm::Gaussian).unwrap()
        })
    });
}

fn bench_simulation(c: &mut Criterion) {
    let grid = TimeGrid::daily(0.5).unwrap();
    let mut model = BehaviorModel::default();
    model.n_pevs_per_day = 20;
    let costs = CasePreset::Case1.cost_parameters(&grid);
    let scenarios = sample_scenarios(&model, &grid, 3, 16).unwrap();
    let setup = SimulationSetup {
        grid: &grid,
        charger: ChargerSpec::default(),
        x_chargers: 8,
        costs: &costs,
        limits: GridLimits::default(),
        policy: OperationPolicy {
            interchange_enabled: true,
        },
    };
    let mut group = c.benchmark_group("simulate_days");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| simulate_days(&setup, &scenarios).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| simulate_days_seq(&setup, &scenarios).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_sampling, bench_bound_estimation, bench_simulation);
criterion_main!(benches);
