use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stgraph_bench::feature_matrix;
use stgraph_core::projection::gram;

fn gram_by_dim(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    group.sample_size(20);
    for d in [12, 24, 48, 96] {
        let f = feature_matrix(50_000, d);
        group.bench_with_input(BenchmarkId::new("50k_rows", d), &f, |b, f| b.iter(|| gram(black_box(f))));
    }
    group.finish();
}

criterion_group!(benches, gram_by_dim);
criterion_main!(benches);
