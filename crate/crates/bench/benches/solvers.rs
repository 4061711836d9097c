use std::hint::black_box;

use cdma_lsa::game::{run_equilibrium, solve_target_sinr, EquilibriumOptions};
use cdma_lsa::lsa::{self, InterfererLoad, QuantileMode};
use cdma_lsa::model::SystemConfig;
use cdma_lsa::montecarlo::generate_scenario;
use cdma_lsa::receivers::{LinkEvaluator, ReceiverKind};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn config(users: usize) -> SystemConfig {
    SystemConfig {
        users,
        processing_gain: 64,
        max_delay: Some(3),
        max_offset: Some(2),
        ..SystemConfig::default()
    }
}

fn scalar_solvers(c: &mut Criterion) {
    c.bench_function("target_sinr/B=120", |b| b.iter(|| solve_target_sinr(black_box(120))));
    let loads: Vec<InterfererLoad> = (0..63)
        .map(|h| InterfererLoad {
            received_power: 0.01 * (1.0 + h as f64 / 10.0),
            xi_sq: 1e-4,
        })
        .collect();
    c.bench_function("beta_d/mmse/K=64", |b| {
        b.iter(|| lsa::solve_beta_d_mmse(1e-3, 64, black_box(&loads), 3))
    });
    let t = solve_target_sinr(120).unwrap();
    c.bench_function("predict_profiles/K=32", |b| {
        b.iter(|| lsa::predict_profiles(black_box(&config(32)), t, ReceiverKind::Mmse, QuantileMode::Midpoint))
    });
}

fn finite_system(c: &mut Criterion) {
    let mut group = c.benchmark_group("finite");
    group.sample_size(20);
    for k in [8usize, 32] {
        let sc = generate_scenario(&config(k), 0).unwrap();
        let powers = vec![0.02; k];
        group.bench_with_input(BenchmarkId::new("evaluator/new", k), &sc, |b, sc| {
            b.iter(|| LinkEvaluator::new(sc))
        });
        let ev = LinkEvaluator::new(&sc);
        for kind in ReceiverKind::ALL {
            group.bench_with_input(BenchmarkId::new(format!("sinrs/{kind}"), k), &powers, |b, p| {
                b.iter(|| ev.sinrs(kind, p))
            });
        }
        group.bench_with_input(BenchmarkId::new("equilibrium/mmse", k), &sc, |b, sc| {
            b.iter(|| run_equilibrium(sc, ReceiverKind::Mmse, &EquilibriumOptions::default()))
        });
    }
    group.finish();
}

criterion_group!(benches, scalar_solvers, finite_system);
criterion_main!(benches);
