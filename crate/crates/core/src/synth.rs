//! Deterministic synthetic corpora with planted relevance.
//!
//! Every document term is built against one query word `w` of its query as
//! `cos θ · e_l(w) + sin θ · r` with `r` a random unit vector orthogonal to
//! `e_l(w)`. Matching terms use small angles; decoy terms use angles in
//! `[decoy_min_angle, π)`. A document of strength `s` replaces a fraction
//! `s · match_fraction` of its terms with matching terms and carries
//! proportionally more query words in its text, a higher pagerank and a [CLS]
//! vector leaning towards a fixed quality direction, all scaled by
//! `side_signal`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compose::{decompose, query_terms, unigram_id};
use crate::error::{Error, Result};
use crate::eval::{Qrels, Run};
use crate::lexical::LexicalSchema;
use crate::lsh::seeded_rng;
use crate::scorer::RankedDoc;
use crate::store::{EncoderExport, ExportDocument, ExportGroup, ExportPiece};
use crate::text::write_queries;
use crate::train::{write_pairs, TrainingPair};
use crate::weights::ModelWeights;

/// How relevance strength is assigned to the candidates of a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrengthProfile {
    /// `relevant` documents per query with strength 1 (grade 2) or 0.5
    /// (grade 1) when graded, the rest strength 0.
    Tiered,
    /// Strengths evenly spaced over [0, 1] across the candidates; grade 2 at
    /// ≥ 2/3, grade 1 at ≥ 1/3.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim: usize,
    /// Exported encoder layers.
    pub layers: usize,
    pub queries: usize,
    pub candidates: usize,
    pub relevant: usize,
    pub doc_len: usize,
    pub query_len: usize,
    pub vocab: usize,
    pub graded: bool,
    pub window: usize,
    pub profile: StrengthProfile,
    /// Norm of the per-group perturbation applied to stored group vectors.
    pub context_noise: f64,
    pub match_fraction: f64,
    pub match_max_angle: f64,
    pub decoy_min_angle: f64,
    /// Scales how strongly text, pagerank and [CLS] follow relevance.
    pub side_signal: f64,
    /// Terms per exported piece; longer documents are split.
    pub piece_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dim: 32,
            layers: 5,
            queries: 2,
            candidates: 10,
            relevant: 3,
            doc_len: 40,
            query_len: 3,
            vocab: 200,
            graded: true,
            window: 3,
            profile: StrengthProfile::Tiered,
            context_noise: 0.1,
            match_fraction: 0.4,
            match_max_angle: 0.3,
            decoy_min_angle: 0.6,
            side_signal: 1.0,
            piece_len: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub export: EncoderExport,
    /// `(qid, text)` in generation order.
    pub queries: Vec<(String, String)>,
    pub qrels: Qrels,
    /// First-stage candidate lists in shuffled order.
    pub candidates: Run,
    pub pairs: Vec<TrainingPair>,
    /// Planted strength per (qid, doc id).
    pub strengths: BTreeMap<(String, String), f64>,
}

pub fn word(i: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut s = String::new();
    let mut x = i;
    loop {
        s.push(C[x % C.len()] as char);
        x /= C.len();
        s.push(V[x % V.len()] as char);
        x /= V.len();
        if x == 0 {
            break;
        }
    }
    s + "n"
}

fn gaussian(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn unit(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    let mut v = gaussian(rng, dim);
    normalize(&mut v);
    v
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Unit vector at angle `theta` from unit vector `e`.
fn at_angle(rng: &mut ChaCha20Rng, e: &[f64], theta: f64) -> Vec<f64> {
    let mut r = gaussian(rng, e.len());
    let proj: f64 = r.iter().zip(e).map(|(a, b)| a * b).sum();
    r.iter_mut().zip(e).for_each(|(a, b)| *a -= proj * b);
    normalize(&mut r);
    e.iter().zip(&r).map(|(a, b)| theta.cos() * a + theta.sin() * b).collect()
}

fn perturbed(rng: &mut ChaCha20Rng, e: &[f64], noise: f64) -> Vec<f32> {
    let n = unit(rng, e.len());
    let mut v: Vec<f64> = e.iter().zip(&n).map(|(a, b)| a + noise * b).collect();
    normalize(&mut v);
    to_f32(&v)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.dim, self.layers, self.queries, self.candidates, self.doc_len, self.query_len, self.piece_len];
        if positive.contains(&0) {
            return Err(Error::Config("synthetic corpus sizes must be positive".into()));
        }
        if self.vocab < self.query_len * 2 {
            return Err(Error::Config("vocabulary too small for the query length".into()));
        }
        if self.relevant > self.candidates {
            return Err(Error::Config("more relevant documents than candidates".into()));
        }
        Ok(())
    }

    fn strengths(&self) -> Vec<(f64, u32)> {
        let c = self.candidates;
        match self.profile {
            StrengthProfile::Tiered => (0..c)
                .map(|j| {
                    if j >= self.relevant {
                        (0.0, 0)
                    } else if self.graded && j >= self.relevant.div_ceil(2) {
                        (0.5, 1)
                    } else if self.graded {
                        (1.0, 2)
                    } else {
                        (1.0, 1)
                    }
                })
                .collect(),
            StrengthProfile::Linear => (0..c)
                .map(|j| {
                    let s = if c == 1 { 1.0 } else { j as f64 / (c - 1) as f64 };
                    let g = if s >= 2.0 / 3.0 { 2 } else if s >= 1.0 / 3.0 { 1 } else { 0 };
                    (s, if self.graded { g } else { g.min(1) })
                })
                .collect(),
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed);
    let (dim, layers) = (config.dim, config.layers);
    let vocab: Vec<String> = (0..config.vocab).map(word).collect();
    // Per-word, per-layer base directions sharing a word-level component.
    let mut base: Vec<Vec<Vec<f64>>> = Vec::with_capacity(vocab.len());
    for _ in 0..vocab.len() {
        let shared = unit(&mut rng, dim);
        base.push(
            (0..layers)
                .map(|_| {
                    let mut v: Vec<f64> = shared.iter().zip(unit(&mut rng, dim)).map(|(a, b)| a + 0.5 * b).collect();
                    normalize(&mut v);
                    v
                })
                .collect(),
        );
    }
    let quality = unit(&mut rng, dim);

    let mut documents = Vec::new();
    let mut groups: BTreeMap<String, ExportGroup> = BTreeMap::new();
    let mut queries = Vec::new();
    let mut qrels = Qrels::default();
    let mut candidates = Run::default();
    let mut pairs = Vec::new();
    let mut strengths_out = BTreeMap::new();

    for qi in 0..config.queries {
        let qid = format!("q{}", qi + 1);
        let words: Vec<usize> = rand::seq::index::sample(&mut rng, vocab.len(), config.query_len).into_vec();
        let text = words.iter().map(|&w| vocab[w].as_str()).collect::<Vec<_>>().join(" ");
        let set = decompose(&query_terms(&text), config.window)?;
        for g in &set.groups {
            if groups.contains_key(&g.id) {
                continue;
            }
            let members = g
                .members
                .iter()
                .map(|&pos| {
                    let w = words[pos];
                    (0..layers).flat_map(|l| perturbed(&mut rng, &base[w][l], config.context_noise)).collect()
                })
                .collect();
            groups.insert(g.id.clone(), ExportGroup { id: g.id.clone(), members });
        }
        debug_assert!(groups.contains_key(&unigram_id(&vocab[words[0]])));

        let mut ranked = Vec::new();
        let mut graded_docs = Vec::new();
        for (j, (strength, grade)) in config.strengths().into_iter().enumerate() {
            let doc_id = format!("{qid}-d{:02}", j + 1);
            let matches = (strength * config.match_fraction * config.doc_len as f64).round() as usize;
            let mut vectors = Vec::with_capacity(config.doc_len * layers * dim);
            for t in 0..config.doc_len {
                let w = words[rng.random_range(0..words.len())];
                let theta = if t < matches {
                    rng.random_range(0.0..config.match_max_angle)
                } else {
                    rng.random_range(config.decoy_min_angle..PI)
                };
                for l in 0..layers {
                    vectors.extend(to_f32(&at_angle(&mut rng, &base[w][l], theta)));
                }
            }
            let side = strength * config.side_signal;
            let mut pieces = Vec::new();
            let mut start = 0;
            while start < config.doc_len {
                let end = (start + config.piece_len).min(config.doc_len);
                let mut cls: Vec<f64> = gaussian(&mut rng, dim).iter().map(|x| 0.3 * x).collect();
                cls.iter_mut().zip(&quality).for_each(|(c, q)| *c += side * q);
                pieces.push(ExportPiece {
                    term_count: end - start,
                    vectors: vectors[start * layers * dim..end * layers * dim].to_vec(),
                    cls: to_f32(&cls),
                });
                start = end;
            }

            let filler = |rng: &mut ChaCha20Rng, n: usize| -> Vec<String> {
                (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].clone()).collect()
            };
            let mut title = filler(&mut rng, 4);
            let mut body = filler(&mut rng, 30);
            for &w in &words {
                if rng.random_bool(side.clamp(0.0, 1.0) * 0.9) {
                    title.push(vocab[w].clone());
                }
            }
            let extra = (side * 6.0).round() as usize + usize::from(rng.random_bool(0.3));
            for _ in 0..extra {
                body.push(vocab[words[rng.random_range(0..words.len())]].clone());
            }
            title.shuffle(&mut rng);
            body.shuffle(&mut rng);
            let pagerank = 3.0 + 3.0 * side + 0.3 * rng.sample::<f64, _>(StandardNormal);

            documents.push(ExportDocument {
                doc_id: doc_id.clone(),
                title: title.join(" "),
                body: body.join(" "),
                other_features: BTreeMap::from([("pagerank".to_string(), pagerank)]),
                pieces,
            });
            if grade > 0 {
                qrels.judgements.entry(qid.clone()).or_default().insert(doc_id.clone(), grade);
            } else {
                qrels.judgements.entry(qid.clone()).or_default().insert(doc_id.clone(), 0);
            }
            strengths_out.insert((qid.clone(), doc_id.clone()), strength);
            graded_docs.push((doc_id.clone(), grade));
            ranked.push(doc_id);
        }
        ranked.shuffle(&mut rng);
        let n = ranked.len();
        candidates.insert(
            &qid,
            ranked
                .into_iter()
                .enumerate()
                .map(|(i, doc_id)| RankedDoc { doc_id, score: (n - i) as f64 })
                .collect(),
        );
        for (pos, gp) in &graded_docs {
            for (neg, gn) in &graded_docs {
                if gp > gn {
                    pairs.push(TrainingPair { qid: qid.clone(), positive: pos.clone(), negative: neg.clone() });
                }
            }
        }
        queries.push((qid, text));
    }

    Ok(SynthCorpus {
        config: config.clone(),
        export: EncoderExport {
            dim,
            layer_ids: (0..layers as u32).collect(),
            documents,
            groups: groups.into_values().collect(),
        },
        queries,
        qrels,
        candidates,
        pairs,
        strengths: strengths_out,
    })
}

impl SynthCorpus {
    /// Writes `export.becrexp`, `queries.tsv`, `qrels.txt`, `candidates.run`,
    /// `pairs.tsv` and `config.json` into `dir`.
    pub fn write_fixture(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.export.write(dir.join("export.becrexp"))?;
        fs::write(dir.join("queries.tsv"), write_queries(&self.queries))?;
        fs::write(dir.join("qrels.txt"), self.qrels.to_text())?;
        fs::write(dir.join("candidates.run"), self.candidates.to_text("first-stage"))?;
        fs::write(dir.join("pairs.tsv"), write_pairs(&self.pairs))?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn query_text(&self, qid: &str) -> Option<&str> {
        self.queries.iter().find(|(q, _)| q == qid).map(|(_, t)| t.as_str())
    }
}

/// Deep-only weights that reward close matches: unit weight on every kernel
/// with mean ≥ 0.9 at every layer, all else zero.
pub fn oracle_weights(layers: usize, dim: usize, schema: LexicalSchema, other_names: Vec<String>) -> Result<ModelWeights> {
    let mut w = ModelWeights::init(crate::weights::DEFAULT_KERNELS, layers, dim, schema, other_names)?;
    for k in 0..w.kernel_count() {
        if w.kernels.mu[k] >= 0.9 - 1e-9 {
            for l in 0..layers {
                w.alpha[k * layers + l] = 1.0;
            }
        }
    }
    Ok(w)
}
