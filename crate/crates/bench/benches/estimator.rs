use std::hint::black_box;

use cde_bench::simulated_inputs;
use cde_core::simulation::candidate_models;
use cde_core::{estimate_xi, generate, select, CriterionConfig, DgmParams, Penalty};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_estimate(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_xi");
    for n in [1_000, 10_000] {
        let (design, ps, bl) = simulated_inputs(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| estimate_xi(black_box(&design), &ps, &bl).unwrap())
        });
    }
    group.finish();
}

fn bench_select(c: &mut Criterion) {
    let (design, ps, bl) = simulated_inputs(10_000, 2);
    let config = CriterionConfig {
        penalty: Penalty::Gic,
        candidates: candidate_models(),
    };
    c.bench_function("select/gic/10000", |b| b.iter(|| select(black_box(&design), &ps, &bl, &config).unwrap()));
}

fn bench_generate(c: &mut Criterion) {
    let params = DgmParams::default();
    c.bench_function("generate/10000", |b| b.iter(|| generate(black_box(10_000), 3, &params).unwrap()));
}

criterion_group!(benches, bench_estimate, bench_select, bench_generate);
criterion_main!(benches);
