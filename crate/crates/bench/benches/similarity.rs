use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use lst_core::perf::{random_normalized_rows, score_all};
use lst_core::regress::{dot_similarity, similarity};

fn pairwise(c: &mut Criterion) {
    let rows = random_normalized_rows(2, 360, 1);
    let (a, b) = rows.split_at(360);
    let mut g = c.benchmark_group("pair");
    g.throughput(Throughput::Elements(1));
    g.bench_function("pearson_360", |bch| {
        bch.iter(|| similarity(black_box(a), black_box(b)).unwrap())
    });
    g.bench_function("normalized_dot_360", |bch| {
        bch.iter(|| dot_similarity(black_box(a), black_box(b)))
    });
    g.finish();
}

fn bank_scan(c: &mut Criterion) {
    let mut g = c.benchmark_group("bank_scan");
    for m in [180usize, 360, 720] {
        let bank = random_normalized_rows(2000, m, 2);
        let queries = random_normalized_rows(64, m, 3);
        g.throughput(Throughput::Elements(64 * 2000));
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |bch, &m| {
            bch.iter(|| score_all(black_box(&queries), black_box(&bank), m))
        });
    }
    g.finish();
}

criterion_group!(benches, pairwise, bank_scan);
criterion_main!(benches);
