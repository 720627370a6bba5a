#![allow(dead_code)]

use std::collections::HashMap;

use becr_core::compose::TokenGroupEmbedding;
use becr_core::eval::{ndcg_at_k, Qrels, Run};
use becr_core::lexical::{CorpusStats, LexicalSchema};
use becr_core::scorer::{Mode, Reranker, ScoringConfig};
use becr_core::store::{ingest_document, ingest_group, DocumentRecord, Ingestor, LayerSelection, Precision};
use becr_core::synth::SynthCorpus;
use becr_core::train::{train, TrainConfig, TrainReport, TrainingSet};
use becr_core::weights::{Component, ModelWeights, DEFAULT_KERNELS};

/// A synthetic corpus ingested into in-memory stores.
pub struct World {
    pub docs: HashMap<String, DocumentRecord>,
    pub groups: HashMap<String, TokenGroupEmbedding>,
    pub corpus: CorpusStats,
    pub layers: usize,
    pub dim: usize,
}

pub fn world(c: &SynthCorpus, bits: usize, seed: u64) -> World {
    let ing = Ingestor::new(c.export.dim, &c.export.layer_ids, &LayerSelection::All, bits, seed, Precision::Both).unwrap();
    let mut docs = HashMap::new();
    let mut corpus = CorpusStats::default();
    for d in &c.export.documents {
        let r = ingest_document(d, &ing).unwrap();
        corpus.add_document(&r.fields);
        docs.insert(r.doc_id.clone(), r);
    }
    let groups = c.export.groups.iter().map(|g| (g.id.clone(), ingest_group(g, &ing).unwrap())).collect();
    World { docs, groups, corpus, layers: ing.config.layers(), dim: c.export.dim }
}

impl World {
    pub fn reranker<'a>(&'a self, weights: &'a ModelWeights, mode: Mode) -> Reranker<'a, HashMap<String, DocumentRecord>, HashMap<String, TokenGroupEmbedding>> {
        Reranker::new(&self.docs, &self.groups, &self.corpus, weights, ScoringConfig::new(mode)).unwrap()
    }

    pub fn initial_weights(&self) -> ModelWeights {
        ModelWeights::init(DEFAULT_KERNELS, self.layers, self.dim, LexicalSchema::full(), vec!["pagerank".into()]).unwrap()
    }
}

/// Queries split into a training prefix and a held-out suffix.
pub struct Split {
    pub train: Vec<String>,
    pub held_out: Vec<String>,
}

pub fn split(c: &SynthCorpus, train: usize) -> Split {
    let ids: Vec<String> = c.queries.iter().map(|q| q.0.clone()).collect();
    Split { train: ids[..train].to_vec(), held_out: ids[train..].to_vec() }
}

pub struct Trained {
    pub report: TrainReport,
    pub held_out_ndcg5: f64,
}

/// Trains from the zero model with `disabled` zeroed and frozen, then
/// re-ranks the held-out queries.
pub fn train_and_evaluate(c: &SynthCorpus, w: &World, split: &Split, mode: Mode, config: &TrainConfig, disabled: Option<Component>) -> Trained {
    let mut init = w.initial_weights();
    let mut config = config.clone();
    if let Some(comp) = disabled {
        init.zero_component(comp);
        config.frozen.push(comp);
    }
    let queries: HashMap<String, String> = c.queries.iter().cloned().collect();
    let pairs: Vec<_> = c.pairs.iter().filter(|p| split.train.contains(&p.qid)).cloned().collect();
    let set = TrainingSet::build(&w.reranker(&init, mode), &queries, &pairs).unwrap();
    let report = train(&set, &init, &config).unwrap();
    let held_out_ndcg5 = held_out_ndcg(c, w, &split.held_out, &report.weights, mode, 5);
    Trained { report, held_out_ndcg5 }
}

pub fn held_out_ndcg(c: &SynthCorpus, w: &World, qids: &[String], weights: &ModelWeights, mode: Mode, k: usize) -> f64 {
    let r = w.reranker(weights, mode);
    let mut run = Run::default();
    let mut qrels = Qrels::default();
    for qid in qids {
        let cands: Vec<String> = c.candidates.queries[qid].iter().map(|d| d.doc_id.clone()).collect();
        run.insert(qid, r.rerank(c.query_text(qid).unwrap(), &cands, None).unwrap().ranked);
        qrels.judgements.insert(qid.clone(), c.qrels.judgements[qid].clone());
    }
    ndcg_at_k(&run, &qrels, k).unwrap().mean
}
