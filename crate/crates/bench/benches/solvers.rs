use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fraczakai::fraccalc::fractional_integral;
use fraczakai::subordinator::{inverse_density, sample_inverse_path};
use fraczakai::zakai_classical::solve_zakai;
use fraczakai::zakai_fractional::solve_fractional_zakai;
use fraczakai::{DensityQuery, GridFunction, TimeGrid};
use fraczakai_bench::Fixture;
use std::hint::black_box;

fn density(c: &mut Criterion) {
    let mut g = c.benchmark_group("inverse_density");
    for beta in [0.3, 0.5, 0.8] {
        g.bench_with_input(BenchmarkId::from_parameter(beta), &beta, |b, &beta| {
            b.iter(|| inverse_density(DensityQuery::new(beta, 1.0, black_box(0.7)).unwrap()))
        });
    }
    g.finish();
}

fn clock(c: &mut Criterion) {
    let real = TimeGrid::covering(1.0, 1e-3).unwrap();
    c.bench_function("inverse_path_1e3", |b| b.iter(|| sample_inverse_path(0.6, &real, 1e-3, black_box(3), 0).unwrap()));
}

fn memory_integral(c: &mut Criterion) {
    let mut g = c.benchmark_group("fractional_integral");
    for n in [500usize, 2000] {
        let f = GridFunction::new(1.0 / n as f64, (0..=n).map(|k| (k as f64 / n as f64).sin()).collect()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| b.iter(|| fractional_integral(f, 0.5).unwrap()));
    }
    g.finish();
}

fn filters(c: &mut Criterion) {
    let fx = Fixture::new(0.6, 0.5, 2e-3, 0.05);
    let mut g = c.benchmark_group("filters");
    g.sample_size(10);
    g.bench_function("classical", |b| b.iter(|| solve_zakai(&fx.model, &fx.grid, &fx.obs).unwrap()));
    g.bench_function("fractional", |b| b.iter(|| solve_fractional_zakai(&fx.model, &fx.grid, &fx.clock, &fx.obs).unwrap()));
    g.finish();
}

criterion_group!(benches, density, clock, memory_integral, filters);
criterion_main!(benches);
