//! Exact nearest-neighbor scan, sequential against data-parallel.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng as _;

use ane_core::par::Parallelism;
use ane_core::rng;
use ane_core::search::{EmbeddingIndex, Metric};

const ENTRIES: usize = 100_000;
const DIM: usize = 40;
const QUERIES: usize = 16;

fn random_index() -> (EmbeddingIndex, Vec<Vec<f64>>) {
    let mut r = rng::stream(11, 0, 0);
    let mut index = EmbeddingIndex::new(DIM).unwrap();
    let mut v = vec![0f32; DIM];
    for i in 0..ENTRIES {
        v.iter_mut().for_each(|x| *x = r.random_range(-1.0..1.0));
        index.add_f32(&format!("w{i}"), "", &v).unwrap();
    }
    let queries = (0..QUERIES).map(|_| (0..DIM).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    (index, queries)
}

fn scan(c: &mut Criterion) {
    let (index, queries) = random_index();
    let parts = ane_core::par::current_workers().max(1) * 4;
    let mut group = c.benchmark_group("scan");
    group.sample_size(10);
    for metric in [Metric::L2, Metric::Cosine] {
        for mode in [Parallelism::Sequential, Parallelism::Parallel] {
            let id = BenchmarkId::new(format!("batch_nearest/{}", metric.name()), format!("{mode:?}"));
            group.bench_function(id, |b| b.iter(|| index.batch_nearest_with(&queries, metric, parts, mode).unwrap()));
        }
        for mode in [Parallelism::Sequential, Parallelism::Parallel] {
            let id = BenchmarkId::new(format!("top_k10/{}", metric.name()), format!("{mode:?}"));
            group.bench_function(id, |b| b.iter(|| index.top_k_with(&queries[0], 10, metric, parts, mode).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, scan);
criterion_main!(benches);
