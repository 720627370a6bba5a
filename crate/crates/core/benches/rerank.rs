use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use becr_core::bench::{build_bench_stores, BenchConfig};
use becr_core::kernel::{kernel_pool, KernelBank};
use becr_core::lexical::LexicalSchema;
use becr_core::lsh::{hamming_many, hamming_words, seeded_rng};
use becr_core::scorer::{Mode, Reranker, ScoringConfig};
use becr_core::store::{DocStore, TokenStore};
use becr_core::weights::{ModelWeights, DEFAULT_KERNELS};

fn rerank(c: &mut Criterion) {
    let config = BenchConfig { doc_len: 300, ..BenchConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    let (query, corpus) = build_bench_stores(&config, dir.path()).unwrap();
    let docs = DocStore::open(dir.path().join("docs.becr")).unwrap();
    let tokens = TokenStore::open(dir.path().join("tokens.becr")).unwrap();
    let mut weights = ModelWeights::init(DEFAULT_KERNELS, config.layers, config.dim, LexicalSchema::full(), vec!["pagerank".into()]).unwrap();
    weights.alpha.iter_mut().for_each(|a| *a = 0.01);
    let ids = docs.doc_ids().unwrap();

    let mut group = c.benchmark_group("rerank");
    group.sample_size(10);
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    for (label, t) in [("sequential", 1), ("parallel", threads)] {
        let r = Reranker::new(&docs, &tokens, &corpus, &weights, ScoringConfig::new(Mode::Lsh)).unwrap().with_threads(t);
        group.bench_with_input(BenchmarkId::new(label, t), &ids, |b, ids| {
            b.iter(|| black_box(r.rerank(&query, ids, None).unwrap()))
        });
    }
    group.finish();
}

fn popcount(c: &mut Criterion) {
    let mut rng = seeded_rng(1);
    let many: Vec<u64> = (0..23 * 4).map(|_| rng.random()).collect();
    let one: Vec<u64> = (0..4).map(|_| rng.random()).collect();
    let mut out = vec![0u32; 23];
    let mut group = c.benchmark_group("hamming_23x256");
    group.bench_function("batched", |b| b.iter(|| hamming_many(black_box(&many), black_box(&one), &mut out)));
    group.bench_function("pairwise", |b| {
        b.iter(|| many.chunks_exact(4).map(|q| hamming_words(black_box(q), black_box(&one))).sum::<u32>())
    });
    group.finish();
}

fn pooling(c: &mut Criterion) {
    let mut rng = seeded_rng(2);
    let row: Vec<f64> = (0..857).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bank = KernelBank::evenly_spaced(DEFAULT_KERNELS).unwrap();
    c.bench_function("kernel_pool_857x11", |b| b.iter(|| kernel_pool(black_box(&row), &bank).unwrap()));
}

criterion_group!(benches, rerank, popcount, pooling);
criterion_main!(benches);
