//! Additive scoring `S = S_deep + S_lexi + S_others`, candidate re-ranking
//! and pairwise score explanations.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::compose::{decompose_with, query_terms, CompositionConfig, GroupLookup, QueryTerm, ResolvedQuery, TokenGroupSet};
use crate::error::{Error, Result};
use crate::kernel::{pool_into, KernelBank};
use crate::lexical::{assemble_lexical_features, CorpusStats, LexicalConfig, LexicalFeatureVector};
use crate::lsh::{hamming_many, CosineTable};
use crate::parallel::map_ordered;
use crate::store::{DocStore, DocumentRecord, TokenStore};
use crate::vector::{cosine_with_norms, norm};
use crate::weights::ModelWeights;

/// How query-document term similarities are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exact cosine between the composed query vector and dense document vectors.
    Full,
    /// Weighted Hamming-based cosine estimates over LSH footprints.
    Lsh,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "lsh" => Ok(Mode::Lsh),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected full or lsh)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Lsh => "lsh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub mode: Mode,
    pub composition: CompositionConfig,
    pub lexical: LexicalConfig,
}

impl ScoringConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            composition: CompositionConfig::default(),
            lexical: LexicalConfig::default(),
        }
    }
}

/// Source of stored documents.
pub trait DocSource {
    fn fetch(&self, doc_id: &str) -> Result<DocumentRecord>;
}

impl DocSource for DocStore {
    fn fetch(&self, doc_id: &str) -> Result<DocumentRecord> {
        DocStore::fetch(self, doc_id)
    }
}

impl DocSource for HashMap<String, DocumentRecord> {
    fn fetch(&self, doc_id: &str) -> Result<DocumentRecord> {
        self.get(doc_id).cloned().ok_or_else(|| Error::NotFound(doc_id.to_string()))
    }
}

/// A query whose token groups have been fetched and, in full mode, composed.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub text: String,
    pub groups: TokenGroupSet,
    pub resolved: ResolvedQuery,
    pub mode: Mode,
    layers: usize,
    /// Full mode: composed vector and its norm per term and layer.
    composed: Vec<Vec<(Vec<f32>, f64)>>,
    table: Option<CosineTable>,
    lsh: Option<LshPlan>,
}

/// Query footprints packed per layer so the inner loop walks contiguous words.
#[derive(Debug, Clone)]
struct LshPlan {
    words: usize,
    /// Per layer, every contribution's footprint in term order.
    packed: Vec<Vec<u64>>,
    weights: Vec<f64>,
    /// Exclusive end of each term's run of contributions.
    term_ends: Vec<usize>,
}

impl LshPlan {
    fn new(resolved: &ResolvedQuery, layers: usize) -> Self {
        let words = resolved.contributions[0][0].embedding.footprints[0].words().len();
        let mut packed = vec![Vec::new(); layers];
        let mut weights = Vec::new();
        let mut term_ends = Vec::with_capacity(resolved.len());
        for term in &resolved.contributions {
            for c in term {
                for (l, fp) in c.embedding.footprints.iter().enumerate() {
                    packed[l].extend_from_slice(fp.words());
                }
                weights.push(c.weight);
            }
            term_ends.push(weights.len());
        }
        Self { words, packed, weights, term_ends }
    }
}

impl PreparedQuery {
    pub fn new(text: &str, lookup: &impl GroupLookup, config: &ScoringConfig) -> Result<Self> {
        let terms = query_terms(text);
        let groups = decompose_with(&terms, &config.composition)?;
        let resolved = ResolvedQuery::resolve(&groups, lookup)?;
        let layers = resolved.layers();
        let mut composed = Vec::new();
        let mut table = None;
        let mut lsh = None;
        match config.mode {
            Mode::Full => {
                for i in 0..resolved.len() {
                    let per_layer = resolved.term_embedding(i)?;
                    composed.push(
                        per_layer
                            .into_iter()
                            .map(|v| {
                                let n = v.norm();
                                (v.into_inner(), n)
                            })
                            .collect(),
                    );
                }
            }
            Mode::Lsh => {
                let first = &resolved.contributions[0][0].embedding;
                let Some(fp) = first.footprints.first() else {
                    return Err(Error::Config("lsh mode needs token groups with footprints".into()));
                };
                for c in resolved.contributions.iter().flatten() {
                    if c.embedding.footprints.len() != layers {
                        return Err(Error::Config(format!("group `{}` lacks footprints", c.group)));
                    }
                }
                table = Some(CosineTable::new(fp.bits()));
                lsh = Some(LshPlan::new(&resolved, layers));
            }
        }
        Ok(Self {
            text: text.to_string(),
            groups,
            resolved,
            mode: config.mode,
            layers,
            composed,
            table,
            lsh,
        })
    }

    pub fn terms(&self) -> &[QueryTerm] {
        &self.resolved.terms
    }

    pub fn len(&self) -> usize {
        self.resolved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resolved.is_empty()
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Similarities `c_{l,i,j}` laid out as `[(i * layers + l) * m + j]`.
    pub fn similarities(&self, doc: &DocumentRecord) -> Result<Vec<f64>> {
        let m = doc.term_count;
        if m == 0 {
            return Err(Error::EmptySimilarities);
        }
        let (n, layers) = (self.len(), self.layers);
        let mut sims = vec![0.0; n * layers * m];
        match self.mode {
            Mode::Full => {
                let grid = doc
                    .dense
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("document `{}` has no dense vectors for full mode", doc.doc_id)))?;
                check_layers(layers, grid.layers())?;
                if grid.dim() != self.composed[0][0].0.len() {
                    return Err(Error::DimensionMismatch { expected: self.composed[0][0].0.len(), actual: grid.dim() });
                }
                for l in 0..layers {
                    for j in 0..m {
                        let d = grid.get(j, l);
                        let dn = norm(d);
                        for i in 0..n {
                            let (q, qn) = &self.composed[i][l];
                            sims[(i * layers + l) * m + j] = cosine_with_norms(q, *qn, d, dn);
                        }
                    }
                }
            }
            Mode::Lsh => {
                let grid = doc
                    .footprints
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("document `{}` has no footprints for lsh mode", doc.doc_id)))?;
                check_layers(layers, grid.layers())?;
                let table = self.table.as_ref().expect("lsh query has a cosine table");
                if grid.bits() != table.bits() {
                    return Err(Error::FootprintMismatch(table.bits(), grid.bits()));
                }
                let plan = self.lsh.as_ref().expect("lsh query has packed footprints");
                if grid.words() != plan.words {
                    return Err(Error::FootprintMismatch(table.bits(), grid.bits()));
                }
                let mut h = vec![0u32; plan.weights.len()];
                for l in 0..layers {
                    let packed = &plan.packed[l];
                    for j in 0..m {
                        hamming_many(packed, grid.get(j, l), &mut h);
                        let mut c = 0;
                        for (i, &end) in plan.term_ends.iter().enumerate() {
                            let mut s = 0.0;
                            while c < end {
                                s += plan.weights[c] * table.get(h[c]);
                                c += 1;
                            }
                            sims[(i * layers + l) * m + j] = s.clamp(-1.0, 1.0);
                        }
                    }
                }
            }
        }
        Ok(sims)
    }
}

fn check_layers(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::StoreMismatch(format!(
            "query groups carry {expected} layers but the document carries {actual}"
        )));
    }
    Ok(())
}

/// Everything the scorer needs from one (query, document) pair. Independent of
/// the model weights, so it can be computed once and reused during training.
#[derive(Debug, Clone, PartialEq)]
pub struct DocFeatures {
    pub doc_id: String,
    pub terms: Vec<String>,
    pub layers: usize,
    pub doc_terms: usize,
    pub similarities: Vec<f64>,
    pub lexical: LexicalFeatureVector,
    pub cls: Vec<f64>,
    pub others: Vec<f64>,
}

impl DocFeatures {
    /// Similarity row for query term `i` at `layer`.
    pub fn row(&self, i: usize, layer: usize) -> &[f64] {
        let m = self.doc_terms;
        let start = (i * self.layers + layer) * m;
        &self.similarities[start..start + m]
    }
}

pub fn extract_features(
    query: &PreparedQuery,
    doc: &DocumentRecord,
    corpus: &CorpusStats,
    lexical: &LexicalConfig,
    other_names: &[String],
) -> Result<DocFeatures> {
    let similarities = query.similarities(doc)?;
    let terms: Vec<String> = query.terms().iter().map(|t| t.text.clone()).collect();
    let refs: Vec<&str> = terms.iter().map(String::as_str).collect();
    let lexical = assemble_lexical_features(&refs, &doc.fields, corpus, lexical)?;
    let others = other_names
        .iter()
        .map(|name| {
            doc.other_features
                .get(name)
                .copied()
                .ok_or_else(|| Error::Schema(format!("document `{}` lacks other feature `{name}`", doc.doc_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DocFeatures {
        doc_id: doc.doc_id.clone(),
        terms,
        layers: query.layers(),
        doc_terms: doc.term_count,
        similarities,
        lexical,
        cls: doc.cls.as_slice().iter().map(|&x| x as f64).collect(),
        others,
    })
}

/// Kernel-pooled deep features, `values[(i * K + k) * layers + l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepGrid {
    pub terms: usize,
    pub kernels: usize,
    pub layers: usize,
    pub values: Vec<f64>,
}

impl DeepGrid {
    #[inline]
    pub fn get(&self, term: usize, kernel: usize, layer: usize) -> f64 {
        self.values[(term * self.kernels + kernel) * self.layers + layer]
    }
}

pub fn deep_features(features: &DocFeatures, kernels: &KernelBank) -> DeepGrid {
    let (n, k, layers) = (features.terms.len(), kernels.len(), features.layers);
    let mut values = vec![0.0; n * k * layers];
    let mut pooled = vec![0.0; k];
    for i in 0..n {
        for l in 0..layers {
            pool_into(features.row(i, l), kernels, &mut pooled);
            for (kk, &v) in pooled.iter().enumerate() {
                values[(i * k + kk) * layers + l] = v;
            }
        }
    }
    DeepGrid { terms: n, kernels: k, layers, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// Score of one document split by component, query term and feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub doc_id: String,
    pub total: f64,
    pub deep: f64,
    pub lexical: f64,
    pub others: f64,
    /// `S_deep,i` per query term, in query order. `deep` is their sum plus `bias[0]`.
    pub deep_terms: Vec<NamedValue>,
    /// Lexical contribution attributed to each distinct query term.
    pub lexical_terms: Vec<NamedValue>,
    /// Lexical contribution of pair-level features (proximity, pair BM25).
    pub lexical_rest: f64,
    /// `β_f · f` per lexical feature.
    pub lexical_features: Vec<NamedValue>,
    /// `γ · z` per other feature; the projected [CLS] vector comes first as `cls`.
    pub other_features: Vec<NamedValue>,
    pub bias: [f64; 3],
}

pub fn check_feature_schema(features: &DocFeatures, weights: &ModelWeights) -> Result<()> {
    if features.lexical.schema != weights.schema || features.lexical.values.len() != weights.beta.len() {
        return Err(Error::Schema(format!(
            "weights expect lexical schema `{}` but features use `{}`",
            weights.schema.name(),
            features.lexical.schema.name()
        )));
    }
    if features.cls.len() != weights.gamma_cls.len() {
        return Err(Error::Schema(format!(
            "weights project {}-dimensional [CLS] vectors but the document has {}",
            weights.gamma_cls.len(),
            features.cls.len()
        )));
    }
    if features.others.len() != weights.gamma_others.len() {
        return Err(Error::Schema("other-feature count differs from the weights".into()));
    }
    if features.layers != weights.layers {
        return Err(Error::Schema(format!(
            "weights expect {} layers but features have {}",
            weights.layers, features.layers
        )));
    }
    Ok(())
}

pub fn score_features(features: &DocFeatures, weights: &ModelWeights) -> Result<ScoreBreakdown> {
    check_feature_schema(features, weights)?;
    let grid = deep_features(features, &weights.kernels);
    let mut deep_terms = Vec::with_capacity(grid.terms);
    for (i, term) in features.terms.iter().enumerate() {
        let mut s = 0.0;
        for k in 0..grid.kernels {
            for l in 0..grid.layers {
                s += weights.alpha(k, l) * grid.get(i, k, l);
            }
        }
        deep_terms.push(NamedValue { name: term.clone(), value: s });
    }
    let deep = deep_terms.iter().map(|t| t.value).sum::<f64>() + weights.bias[0];

    let lexical_features: Vec<NamedValue> = features
        .lexical
        .names()
        .into_iter()
        .zip(weights.beta.iter().zip(&features.lexical.values))
        .map(|(name, (b, f))| NamedValue { name, value: b * f })
        .collect();
    let lexical = lexical_features.iter().map(|f| f.value).sum::<f64>() + weights.bias[1];
    let (shares, lexical_rest) = features.lexical.attribute(&weights.beta);
    let lexical_terms = features
        .lexical
        .per_term
        .iter()
        .zip(shares)
        .map(|(t, value)| NamedValue { name: t.term.clone(), value })
        .collect();

    let cls: f64 = weights.gamma_cls.iter().zip(&features.cls).map(|(g, x)| g * x).sum();
    let mut other_features = vec![NamedValue { name: "cls".into(), value: cls }];
    for ((name, g), z) in weights.other_names.iter().zip(&weights.gamma_others).zip(&features.others) {
        other_features.push(NamedValue { name: name.clone(), value: g * z });
    }
    let others = other_features.iter().map(|f| f.value).sum::<f64>() + weights.bias[2];

    Ok(ScoreBreakdown {
        doc_id: features.doc_id.clone(),
        total: deep + lexical + others,
        deep,
        lexical,
        others,
        deep_terms,
        lexical_terms,
        lexical_rest,
        lexical_features,
        other_features,
        bias: weights.bias,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub kind: String,
    pub message: String,
}

impl DocFailure {
    fn new(doc_id: &str, error: &Error) -> Self {
        Self { doc_id: doc_id.to_string(), kind: error.kind().into(), message: error.to_string() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    /// Token-group lookup and query composition.
    pub query: Duration,
    /// Document store reads.
    pub fetch: Duration,
    /// Interaction, kernel pooling and combination.
    pub compute: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutput {
    pub ranked: Vec<RankedDoc>,
    pub failures: Vec<DocFailure>,
    pub timings: PhaseTimings,
}

/// Descending score, ascending doc id on ties.
pub fn sort_ranked(ranked: &mut [RankedDoc]) {
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
}

/// Scores candidates from a document source against token-group embeddings.
pub struct Reranker<'a, D, T> {
    pub docs: &'a D,
    pub tokens: &'a T,
    pub corpus: &'a CorpusStats,
    pub weights: &'a ModelWeights,
    pub config: ScoringConfig,
    pub threads: usize,
}

impl<'a, D, T> Reranker<'a, D, T>
where
    D: DocSource + Sync,
    T: GroupLookup + Sync,
{
    pub fn new(docs: &'a D, tokens: &'a T, corpus: &'a CorpusStats, weights: &'a ModelWeights, config: ScoringConfig) -> Result<Self> {
        weights.validate()?;
        if config.lexical.schema != weights.schema {
            return Err(Error::Schema(format!(
                "weights were trained with lexical schema `{}`, not `{}`",
                weights.schema.name(),
                config.lexical.schema.name()
            )));
        }
        Ok(Self { docs, tokens, corpus, weights, config, threads: 1 })
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn prepare(&self, query: &str) -> Result<PreparedQuery> {
        PreparedQuery::new(query, self.tokens, &self.config)
    }

    pub fn features(&self, query: &PreparedQuery, doc: &DocumentRecord) -> Result<DocFeatures> {
        extract_features(query, doc, self.corpus, &self.config.lexical, &self.weights.other_names)
    }

    pub fn score(&self, query: &PreparedQuery, doc_id: &str) -> Result<ScoreBreakdown> {
        let doc = self.docs.fetch(doc_id)?;
        score_features(&self.features(query, &doc)?, self.weights)
    }

    /// Fetches every candidate, then scores the fetched ones. Candidates that
    /// cannot be fetched or scored are reported in `failures`; the rest are
    /// ranked. Duplicate candidate ids are scored once.
    pub fn rerank(&self, query: &str, candidates: &[String], top_k: Option<usize>) -> Result<RerankOutput> {
        let start = Instant::now();
        let prepared = self.prepare(query)?;
        let query_time = start.elapsed();

        let mut seen = HashSet::new();
        let unique: Vec<&String> = candidates.iter().filter(|c| seen.insert(c.as_str())).collect();

        let start = Instant::now();
        let fetched = map_ordered(&unique, self.threads, |id| self.docs.fetch(id));
        let fetch = start.elapsed();

        let mut failures = Vec::new();
        let mut docs = Vec::with_capacity(unique.len());
        for (id, result) in unique.into_iter().zip(fetched) {
            match result {
                Ok(doc) => docs.push(doc),
                Err(e) => failures.push(DocFailure::new(id, &e)),
            }
        }

        let start = Instant::now();
        let scored = map_ordered(&docs, self.threads, |doc| {
            self.features(&prepared, doc).and_then(|f| score_features(&f, self.weights)).map(|s| s.total)
        });
        let compute = start.elapsed();

        let mut ranked = Vec::with_capacity(docs.len());
        for (doc, result) in docs.iter().zip(scored) {
            match result {
                Ok(score) => ranked.push(RankedDoc { doc_id: doc.doc_id.clone(), score }),
                Err(e) => failures.push(DocFailure::new(&doc.doc_id, &e)),
            }
        }
        sort_ranked(&mut ranked);
        if let Some(k) = top_k {
            ranked.truncate(k);
        }
        Ok(RerankOutput {
            ranked,
            failures,
            timings: PhaseTimings { query: query_time, fetch, compute },
        })
    }

    pub fn explain(&self, query: &str, doc_a: &str, doc_b: &str) -> Result<PairExplanation> {
        let prepared = self.prepare(query)?;
        let a = self.score(&prepared, doc_a)?;
        let b = self.score(&prepared, doc_b)?;
        Ok(explain_pair(query, &a, &b))
    }
}

/// Checks that a document store, token store and weights were built for the
/// same configuration and that `mode` is served by both stores.
pub fn check_stores(docs: &DocStore, tokens: &TokenStore, weights: &ModelWeights, mode: Mode) -> Result<()> {
    let (dc, tc) = (docs.config(), tokens.config());
    dc.check_compatible(tc)?;
    let served = |c: &crate::store::StoreConfig| match mode {
        Mode::Full => c.precision.dense(),
        Mode::Lsh => c.precision.footprints(),
    };
    if !served(dc) || !served(tc) {
        return Err(Error::StoreMismatch(format!(
            "{} mode needs {} in both stores (document store: {}, token store: {})",
            mode.name(),
            if mode == Mode::Full { "dense vectors" } else { "footprints" },
            dc,
            tc
        )));
    }
    if weights.layers != dc.layers() {
        return Err(Error::StoreMismatch(format!(
            "weights expect {} layers but the stores keep {}",
            weights.layers,
            dc.layers()
        )));
    }
    if weights.dim() != dc.dim {
        return Err(Error::StoreMismatch(format!(
            "weights project {}-dimensional [CLS] vectors but the stores hold dimension {}",
            weights.dim(),
            dc.dim
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDiff {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub diff: f64,
}

impl ValueDiff {
    fn new(name: impl Into<String>, a: f64, b: f64) -> Self {
        Self { name: name.into(), a, b, diff: a - b }
    }
}

/// Per query term difference; the lexical share of a repeated term sits on
/// its first occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDiff {
    pub term: String,
    pub position: usize,
    pub deep: ValueDiff,
    pub lexical: ValueDiff,
}

/// Side-by-side comparison of two documents for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExplanation {
    pub query: String,
    pub doc_a: String,
    pub doc_b: String,
    pub total: ValueDiff,
    pub deep: ValueDiff,
    pub lexical: ValueDiff,
    pub others: ValueDiff,
    pub terms: Vec<TermDiff>,
    pub lexical_rest: ValueDiff,
    pub lexical_features: Vec<ValueDiff>,
    pub other_features: Vec<ValueDiff>,
    pub bias: [f64; 3],
}

pub fn explain_pair(query: &str, a: &ScoreBreakdown, b: &ScoreBreakdown) -> PairExplanation {
    let lex = |s: &ScoreBreakdown| -> BTreeMap<String, f64> { s.lexical_terms.iter().map(|t| (t.name.clone(), t.value)).collect() };
    let (lex_a, lex_b) = (lex(a), lex(b));
    let mut claimed = HashSet::new();
    let terms = a
        .deep_terms
        .iter()
        .zip(&b.deep_terms)
        .enumerate()
        .map(|(position, (ta, tb))| {
            let first = claimed.insert(ta.name.clone());
            let pick = |m: &BTreeMap<String, f64>| if first { m.get(&ta.name).copied().unwrap_or(0.0) } else { 0.0 };
            TermDiff {
                term: ta.name.clone(),
                position,
                deep: ValueDiff::new("deep", ta.value, tb.value),
                lexical: ValueDiff::new("lexical", pick(&lex_a), pick(&lex_b)),
            }
        })
        .collect();
    let zip_named = |xa: &[NamedValue], xb: &[NamedValue]| -> Vec<ValueDiff> {
        xa.iter().zip(xb).map(|(x, y)| ValueDiff::new(x.name.clone(), x.value, y.value)).collect()
    };
    PairExplanation {
        query: query.to_string(),
        doc_a: a.doc_id.clone(),
        doc_b: b.doc_id.clone(),
        total: ValueDiff::new("total", a.total, b.total),
        deep: ValueDiff::new("deep", a.deep, b.deep),
        lexical: ValueDiff::new("lexical", a.lexical, b.lexical),
        others: ValueDiff::new("others", a.others, b.others),
        terms,
        lexical_rest: ValueDiff::new("pair-level lexical", a.lexical_rest, b.lexical_rest),
        lexical_features: zip_named(&a.lexical_features, &b.lexical_features),
        other_features: zip_named(&a.other_features, &b.other_features),
        bias: a.bias,
    }
}

impl PairExplanation {
    /// Plain-text table: one row per query term, then component totals and
    /// the document-level features.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "query: {}", self.query);
        let _ = writeln!(out, "A = {}  B = {}", self.doc_a, self.doc_b);
        let _ = writeln!(out, "{:<24} {:>12} {:>12} {:>12}", "", "A", "B", "Diff(A,B)");
        let mut row = |label: &str, v: &ValueDiff| {
            let _ = writeln!(out, "{:<24} {:>12.5} {:>12.5} {:>12.5}", label, v.a, v.b, v.diff);
        };
        for t in &self.terms {
            row(&format!("{} (deep)", t.term), &t.deep);
            row(&format!("{} (lexical)", t.term), &t.lexical);
        }
        row("pair-level lexical", &self.lexical_rest);
        for f in &self.other_features {
            row(&f.name, f);
        }
        row("S_deep", &self.deep);
        row("S_lexi", &self.lexical);
        row("S_others", &self.others);
        row("S", &self.total);
        out
    }
}
