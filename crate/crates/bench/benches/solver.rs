use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use faith_core::{bootstrap, sample_asymptotic, solve_audit_lp, AuditProblem, BootstrapConfig, EmpiricalDistribution};

/// Points on a line with two groups; moving across groups at the same
/// position is free, any other move costs the squared distance.
fn grid_problem(positions: usize, eps: f64) -> (AuditProblem, Vec<f64>) {
    let k = 2 * positions;
    let cost = DMatrix::from_fn(k, k, |i, j| {
        let d = (i / 2) as f64 - (j / 2) as f64;
        d * d / (positions * positions) as f64
    });
    let loss: Vec<f64> = (0..k)
        .map(|i| if i % 2 == 1 { 0.6 } else { 0.2 } + 0.1 * ((i / 2) % 3) as f64)
        .collect();
    let f: Vec<f64> = (0..k).map(|i| 1.0 + (i % 5) as f64).collect();
    let total: f64 = f.iter().sum();
    let f = f.into_iter().map(|x| x / total).collect();
    (
        AuditProblem::from_matrices(loss, cost, DMatrix::zeros(k, k), eps).unwrap(),
        f,
    )
}

fn lp(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_audit_lp");
    for positions in [4, 16, 32] {
        let (problem, f) = grid_problem(positions, 0.05);
        group.bench_with_input(BenchmarkId::from_parameter(2 * positions), &positions, |b, _| {
            b.iter(|| solve_audit_lp(&problem, &f).unwrap())
        });
    }
    group.finish();
}

fn resampling(c: &mut Criterion) {
    let (problem, f) = grid_problem(8, 0.05);
    let counts: Vec<u64> = f.iter().map(|p| (p * 5000.0).round() as u64).collect();
    let f_n = EmpiricalDistribution::from_counts(counts).unwrap();
    let mut group = c.benchmark_group("inference");
    group.sample_size(10);
    group.bench_function("m_out_of_n_B1000", |b| {
        b.iter(|| bootstrap(&problem, &f_n, &BootstrapConfig::m_out_of_n(1000, 1)).unwrap())
    });
    group.bench_function("numerical_B1000", |b| {
        let mut cfg = BootstrapConfig::numerical(1000, 1);
        cfg.step = Some(0.01);
        b.iter(|| bootstrap(&problem, &f_n, &cfg).unwrap())
    });
    group.bench_function("asymptotic_10000", |b| {
        b.iter(|| sample_asymptotic(&problem, f_n.probabilities(), 10_000, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, lp, resampling);
criterion_main!(benches);
