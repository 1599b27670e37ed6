use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mosrank_bench::score_pairs;
use mosrank_core::{eprs_loss, prs_loss, utmos_margin_loss, ComparisonCache, LossConfig, LossFamily};

fn bench_prs(c: &mut Criterion) {
    let mut group = c.benchmark_group("prs_loss");
    for &n in &[16usize, 64, 256] {
        let (yhat, y) = score_pairs(n, 1);
        let cfg = LossConfig {
            family: LossFamily::Prs,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| prs_loss(black_box(&yhat), black_box(&y), &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_eprs_cache(c: &mut Criterion) {
    let mut group = c.benchmark_group("eprs_loss_cache256");
    for &n in &[16usize, 64] {
        let (yhat, y) = score_pairs(n, 2);
        let (cp, ct) = score_pairs(256, 3);
        let mut cache = ComparisonCache::new(256);
        cache.push(&cp, &ct);
        let cfg = LossConfig {
            family: LossFamily::Eprs,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| eprs_loss(black_box(&yhat), black_box(&y), &cache, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_margin(c: &mut Criterion) {
    let (yhat, y) = score_pairs(64, 4);
    c.bench_function("utmos_margin_loss_64", |b| {
        b.iter(|| utmos_margin_loss(black_box(&yhat), black_box(&y), 0.5, 1.0).unwrap())
    });
}

criterion_group!(benches, bench_prs, bench_eprs_cache, bench_margin);
criterion_main!(benches);
