use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use stabledrift_bench::{cauchy1, resolvent_problem};
use stabledrift_core::generator::{Generator, QuadConfig, TestFunction};
use stabledrift_core::resolvent::{neumann_solve, NeumannConfig};
use stabledrift_core::sampler::{sample_decomposition, sample_exact};
use stabledrift_core::{density_grid, GridSpec, SpectralMeasure};

fn sampling(c: &mut Criterion) {
    let cyl = SpectralMeasure::cylindrical(2);
    let mut g = c.benchmark_group("sample");
    g.bench_function("exact_1e4", |b| b.iter(|| sample_exact(&cyl, 1.0, 10_000, black_box(7)).unwrap()));
    g.bench_function("decomposition_1e4", |b| b.iter(|| sample_decomposition(&cyl, 1.0, 10_000, black_box(7)).unwrap()));
    g.finish();
}

fn density(c: &mut Criterion) {
    let mut g = c.benchmark_group("density_grid");
    let one = cauchy1();
    let grid = GridSpec::centered(1, 1 << 14, 0.05);
    g.bench_function("d1_16384", |b| b.iter(|| density_grid(&one, 1.0, &[0.0], black_box(&grid)).unwrap()));
    let cyl = SpectralMeasure::cylindrical(2);
    let grid2 = GridSpec::centered(2, 256, 0.07);
    g.bench_function("d2_256x256", |b| b.iter(|| density_grid(&cyl, 1.0, &[0.0, 0.0], black_box(&grid2)).unwrap()));
    g.finish();
}

fn generator(c: &mut Criterion) {
    let mut g = c.benchmark_group("apply_l");
    for (name, mu) in [("cylindrical", SpectralMeasure::cylindrical(2)), ("isotropic", SpectralMeasure::isotropic(2, 1.0).unwrap())] {
        let gen = Generator::new(&mu, QuadConfig::default()).unwrap();
        let phi = TestFunction::gaussian(vec![0.0, 0.0], 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(name), &gen, |b, gen| {
            b.iter(|| gen.apply_l(&phi, black_box(&[0.3, -0.2])).unwrap())
        });
    }
    g.finish();
}

fn solver(c: &mut Criterion) {
    let mu = cauchy1();
    let mut g = c.benchmark_group("neumann_solve");
    g.sample_size(20);
    for n in [1usize << 12, 1 << 14] {
        let (f, drift) = resolvent_problem(n, 0.05);
        g.bench_with_input(BenchmarkId::from_parameter(n), &(f, drift), |b, (f, drift)| {
            b.iter(|| neumann_solve(f, 1.0, drift, &mu, NeumannConfig::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sampling, density, generator, solver);
criterion_main!(benches);
