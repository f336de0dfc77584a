//! Microbenchmarks for the numeric primitives that dominate filtering
//! cost: log-Bessel evaluation, kernel density queries, concentration
//! estimation, and raw dot products.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use respec_core::{
    dot, estimate_kappa, kde_log_density, log_bessel_i, log_norm_const, normalize, sample_vmf,
    Embedding,
};
use std::hint::black_box;

fn unit_axis(dim: usize) -> Embedding {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    normalize(&v).unwrap()
}

fn bench_bessel(c: &mut Criterion) {
    let mut g = c.benchmark_group("log_bessel_i");
    // Small order goes through the log-domain power series.
    g.bench_function("series_order_31", |b| {
        b.iter(|| log_bessel_i(black_box(31.0), black_box(200.0)).unwrap())
    });
    // Large order goes through the uniform asymptotic expansion.
    g.bench_function("asymptotic_order_255", |b| {
        b.iter(|| log_bessel_i(black_box(255.0), black_box(800.0)).unwrap())
    });
    g.finish();

    let mut g = c.benchmark_group("log_norm_const");
    for &(dim, kappa) in &[(64usize, 300.0f64), (512, 800.0)] {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("dim{dim}_kappa{kappa}")),
            &(dim, kappa),
            |b, &(dim, kappa)| b.iter(|| log_norm_const(black_box(dim), black_box(kappa)).unwrap()),
        );
    }
    g.finish();
}

fn bench_kde(c: &mut Criterion) {
    let mut g = c.benchmark_group("kde_log_density");
    for &(dim, rows) in &[(64usize, 256usize), (64, 5000), (512, 256)] {
        let mu = unit_axis(dim);
        let refs = sample_vmf(&mu, 300.0, rows, 11).unwrap();
        let query = sample_vmf(&mu, 300.0, 1, 12).unwrap().embedding(0);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("dim{dim}_rows{rows}")),
            &(),
            |b, _| {
                b.iter(|| {
                    kde_log_density(black_box(&query), black_box(&refs), 300.0, None).unwrap()
                })
            },
        );
    }
    g.finish();
}

fn bench_kappa(c: &mut Criterion) {
    let mu = unit_axis(64);
    let rows = sample_vmf(&mu, 300.0, 1024, 13).unwrap();
    c.bench_function("estimate_kappa/1024x64", |b| {
        b.iter(|| estimate_kappa(black_box(&rows)).unwrap())
    });
}

fn bench_dot(c: &mut Criterion) {
    let mut g = c.benchmark_group("dot");
    for &dim in &[64usize, 512] {
        let mu = unit_axis(dim);
        let pair = sample_vmf(&mu, 50.0, 2, 14).unwrap();
        let (a, b_emb) = (pair.embedding(0), pair.embedding(1));
        g.bench_with_input(BenchmarkId::from_parameter(dim), &(), |b, _| {
            b.iter(|| dot(black_box(&a), black_box(&b_emb)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_bessel, bench_kde, bench_kappa, bench_dot);
criterion_main!(benches);
