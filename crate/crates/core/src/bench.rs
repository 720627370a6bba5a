//! Latency benchmark over a synthetic store of random term embeddings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compose::{decompose, query_terms, LayeredTermEmbedding, TokenGroupEmbedding};
use crate::error::{Error, Result};
use crate::flops::{groups_per_term, FlopCounts, FlopModel};
use crate::lexical::{Field, FieldStats, LexicalConfig};
use crate::lsh::{seeded_rng, LshFootprint};
use crate::scorer::{Mode, Reranker, ScoringConfig};
use crate::store::{DenseGrid, DocStore, DocStoreWriter, DocumentRecord, FootprintGrid, Precision, StoreConfig, TokenStore, TokenStoreWriter};
use crate::synth::word;
use crate::vector::DenseVector;
use crate::weights::{ModelWeights, DEFAULT_KERNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub docs: usize,
    pub doc_len: usize,
    pub query_len: usize,
    pub layers: usize,
    pub bits: usize,
    pub dim: usize,
    pub mode: Mode,
    pub seed: u64,
    pub threads: usize,
    /// Timed queries after one warm-up query.
    pub repetitions: usize,
    pub window: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            docs: 150,
            doc_len: 857,
            query_len: 5,
            layers: 5,
            bits: 256,
            dim: 768,
            mode: Mode::Lsh,
            seed: 42,
            threads: 1,
            repetitions: 5,
            window: 3,
        }
    }
}

impl BenchConfig {
    /// Short label such as `lsh-n5-L5-b256-t1`.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::Lsh => format!("lsh-n{}-L{}-b{}-t{}", self.query_len, self.layers, self.bits, self.threads),
            Mode::Full => format!("full-n{}-L{}-t{}", self.query_len, self.layers, self.threads),
        }
    }

    pub fn flop_model(&self) -> FlopModel {
        FlopModel {
            n: self.query_len as u64,
            m: self.doc_len as u64,
            p: self.dim as u64,
            k: DEFAULT_KERNELS as u64,
            layers: self.layers as u64,
            bits: if self.mode == Mode::Lsh { self.bits as u64 } else { 0 },
            groups_per_term: groups_per_term(self.query_len as u64, self.window as u64),
            mode: self.mode,
        }
    }

    fn store_config(&self) -> StoreConfig {
        let (precision, bits) = match self.mode {
            Mode::Lsh => (Precision::Lsh, self.bits),
            Mode::Full => (Precision::Full, 0),
        };
        StoreConfig { dim: self.dim, layer_ids: (0..self.layers as u32).collect(), bits, seed: self.seed, precision }
    }

    fn validate(&self) -> Result<()> {
        if [self.docs, self.doc_len, self.query_len, self.layers, self.dim, self.repetitions].contains(&0) {
            return Err(Error::Config("bench sizes must be positive".into()));
        }
        self.store_config().validate()
    }
}

/// Mean and percentiles of per-query timings in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Timing {
    pub fn of(samples: &[Duration]) -> Self {
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let pick = |q: f64| ms[((q * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1];
        Self { mean: ms.iter().sum::<f64>() / ms.len() as f64, p50: pick(0.5), p95: pick(0.95) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub docs_reranked: usize,
    pub total_ms: Timing,
    pub fetch_ms: Timing,
    pub compute_ms: Timing,
    /// Operation counts for one query against all candidates.
    pub flops: FlopCounts,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "config {}: docs={} doc_len={} q_len={} layers={} bits={} dim={} seed={} threads={} repetitions={}",
            c.label(), c.docs, c.doc_len, c.query_len, c.layers, c.bits, c.dim, c.seed, c.threads, c.repetitions
        );
        for (name, t) in [("total", self.total_ms), ("fetch", self.fetch_ms), ("compute", self.compute_ms)] {
            let _ = writeln!(out, "{name:<8} mean {:>9.3} ms  p50 {:>9.3} ms  p95 {:>9.3} ms", t.mean, t.p50, t.p95);
        }
        let f = &self.flops;
        let _ = writeln!(
            out,
            "ops/query similarity={} popcount={} kernel={} linear={} total={}",
            f.similarity, f.popcount, f.kernel, f.linear_combination, f.total
        );
        out
    }

    /// CSV with header `config,phase,metric,value`.
    pub fn to_csv(&self, header: bool) -> String {
        let mut out = String::new();
        if header {
            out.push_str("config,phase,metric,value\n");
        }
        let label = self.config.label();
        for (phase, t) in [("total", self.total_ms), ("fetch", self.fetch_ms), ("compute", self.compute_ms)] {
            for (metric, v) in [("mean_ms", t.mean), ("p50_ms", t.p50), ("p95_ms", t.p95)] {
                let _ = writeln!(out, "{label},{phase},{metric},{v}");
            }
        }
        let f = &self.flops;
        for (metric, v) in [
            ("similarity", f.similarity),
            ("popcount", f.popcount),
            ("kernel", f.kernel),
            ("linear_combination", f.linear_combination),
            ("total", f.total),
        ] {
            let _ = writeln!(out, "{label},ops,{metric},{v}");
        }
        let _ = writeln!(out, "{label},rerank,docs,{}", self.docs_reranked);
        out
    }
}

fn scratch_dir() -> Result<PathBuf> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = std::env::temp_dir().join(format!(
        "becr-bench-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn random_embedding(rng: &mut impl Rng, config: &BenchConfig) -> LayeredTermEmbedding {
    let layers = config.layers;
    match config.mode {
        Mode::Lsh => LayeredTermEmbedding {
            dense: Vec::new(),
            footprints: (0..layers)
                .map(|_| LshFootprint::from_words((0..config.bits / 64).map(|_| rng.random()).collect()))
                .collect(),
        },
        Mode::Full => LayeredTermEmbedding {
            dense: (0..layers)
                .map(|_| DenseVector::new((0..config.dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).expect("finite"))
                .collect(),
            footprints: Vec::new(),
        },
    }
}

/// Writes the synthetic stores into `dir`; returns the query text.
pub fn build_bench_stores(config: &BenchConfig, dir: &Path) -> Result<(String, crate::lexical::CorpusStats)> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed);
    let store_config = config.store_config();
    let vocab: Vec<String> = (0..1000).map(word).collect();
    let query: Vec<&str> = vocab[..config.query_len].iter().map(String::as_str).collect();
    let query = query.join(" ");

    let mut tokens = TokenStoreWriter::create(dir.join("tokens.becr"), store_config.clone())?;
    for g in decompose(&query_terms(&query), config.window)?.groups {
        let members = g.members.iter().map(|_| random_embedding(&mut rng, config)).collect();
        tokens.append(&TokenGroupEmbedding { id: g.id, members })?;
    }
    tokens.finish()?;

    let mut docs = DocStoreWriter::create(dir.join("docs.becr"), store_config)?;
    let (m, layers) = (config.doc_len, config.layers);
    for d in 0..config.docs {
        let (footprints, dense) = match config.mode {
            Mode::Lsh => {
                let data = (0..m * layers * config.bits / 64).map(|_| rng.random()).collect();
                (Some(FootprintGrid::new(m, layers, config.bits, data)?), None)
            }
            Mode::Full => {
                let data = (0..m * layers * config.dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
                (None, Some(DenseGrid::new(m, layers, config.dim, data)?))
            }
        };
        let body: Vec<&str> = (0..m).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        let title: Vec<&str> = (0..8).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        docs.append(&DocumentRecord {
            doc_id: format!("d{d:04}"),
            term_count: m,
            footprints,
            dense,
            cls: DenseVector::new((0..config.dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())?,
            fields: vec![FieldStats::from_text(Field::Title, &title.join(" ")), FieldStats::from_text(Field::Body, &body.join(" "))],
            other_features: [("pagerank".to_string(), rng.random_range(0.0..10.0))].into(),
        })?;
    }
    let corpus = docs.finish()?;
    Ok((query, corpus))
}

/// Builds the stores in a scratch directory, re-ranks every document
/// `repetitions` times after one warm-up query, and removes the scratch files.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    let dir = scratch_dir()?;
    let result = run_in(config, &dir);
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn run_in(config: &BenchConfig, dir: &Path) -> Result<BenchReport> {
    let (query, corpus) = build_bench_stores(config, dir)?;
    let docs = DocStore::open(dir.join("docs.becr"))?;
    let tokens = TokenStore::open(dir.join("tokens.becr"))?;
    let mut weights = ModelWeights::init(DEFAULT_KERNELS, config.layers, config.dim, LexicalConfig::default().schema, vec!["pagerank".into()])?;
    weights.alpha.iter_mut().enumerate().for_each(|(i, a)| *a = 0.01 * (i % 7) as f64);
    weights.beta.iter_mut().for_each(|b| *b = 0.1);
    weights.gamma_others[0] = 0.044;
    let reranker = Reranker::new(&docs, &tokens, &corpus, &weights, ScoringConfig::new(config.mode))?.with_threads(config.threads);
    let candidates = docs.doc_ids()?;

    reranker.rerank(&query, &candidates, None)?;
    let (mut total, mut fetch, mut compute) = (Vec::new(), Vec::new(), Vec::new());
    let mut reranked = 0;
    for _ in 0..config.repetitions {
        let out = reranker.rerank(&query, &candidates, None)?;
        if !out.failures.is_empty() {
            return Err(Error::Config(format!("{} bench documents failed to score", out.failures.len())));
        }
        reranked = out.ranked.len();
        let t = out.timings;
        total.push(t.query + t.fetch + t.compute);
        fetch.push(t.query + t.fetch);
        compute.push(t.compute);
    }
    let per_doc = config.flop_model().count();
    let n = config.docs as u128;
    let flops = FlopCounts {
        similarity: per_doc.similarity * n,
        popcount: per_doc.popcount * n,
        kernel: per_doc.kernel * n,
        linear_combination: per_doc.linear_combination * n,
        total: per_doc.total * n,
    };
    Ok(BenchReport {
        config: config.clone(),
        docs_reranked: reranked,
        total_ms: Timing::of(&total),
        fetch_ms: Timing::of(&fetch),
        compute_ms: Timing::of(&compute),
        flops,
    })
}
