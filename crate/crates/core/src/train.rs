//! Pairwise training of the non-encoder parameters.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::compose::GroupLookup;
use crate::error::{Error, Result};
use crate::kernel::{kernel_pool_with_grad, SIGMA_MIN};
use crate::lsh::seeded_rng;
use crate::scorer::{check_feature_schema, score_features, DocFeatures, DocSource, PreparedQuery, Reranker};
use crate::weights::{Component, ModelWeights};

/// `-log(e^{s⁺} / (e^{s⁺} + e^{s⁻})) = log(1 + e^{s⁻ - s⁺})`.
pub fn pair_loss(score_pos: f64, score_neg: f64) -> f64 {
    softplus(score_neg - score_pos)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub qid: String,
    pub positive: String,
    pub negative: String,
}

/// Parses `qid<TAB>pos_docid<TAB>neg_docid` lines; blank lines and `#`
/// comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format("pairs file", format!("line {}: expected 3 tab-separated columns", no + 1)));
        }
        if cols[1] == cols[2] {
            return Err(Error::format("pairs file", format!("line {}: positive and negative are both `{}`", no + 1, cols[1])));
        }
        pairs.push(TrainingPair { qid: cols[0].into(), positive: cols[1].into(), negative: cols[2].into() });
    }
    Ok(pairs)
}

pub fn write_pairs(pairs: &[TrainingPair]) -> String {
    pairs.iter().map(|p| format!("{}\t{}\t{}\n", p.qid, p.positive, p.negative)).collect()
}

/// Pre-extracted features for every (query, document) that appears in a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: Vec<DocFeatures>,
    /// Indices into `features`: (positive, negative).
    pub pairs: Vec<(usize, usize)>,
}

impl TrainingSet {
    /// Extracts features through `reranker` for the documents named in `pairs`.
    /// `queries` maps query ids to query text.
    pub fn build<D, T>(reranker: &Reranker<'_, D, T>, queries: &HashMap<String, String>, pairs: &[TrainingPair]) -> Result<Self>
    where
        D: DocSource + Sync,
        T: GroupLookup + Sync,
    {
        let mut prepared: HashMap<&str, PreparedQuery> = HashMap::new();
        let mut index: HashMap<(String, String), usize> = HashMap::new();
        let mut features = Vec::new();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            if !prepared.contains_key(p.qid.as_str()) {
                let text = queries
                    .get(&p.qid)
                    .ok_or_else(|| Error::NotFound(format!("query `{}`", p.qid)))?;
                prepared.insert(p.qid.as_str(), reranker.prepare(text)?);
            }
            let q = &prepared[p.qid.as_str()];
            let mut slot = |doc_id: &str| -> Result<usize> {
                let key = (p.qid.clone(), doc_id.to_string());
                if let Some(&i) = index.get(&key) {
                    return Ok(i);
                }
                let doc = reranker.docs.fetch(doc_id)?;
                features.push(reranker.features(q, &doc)?);
                index.insert(key, features.len() - 1);
                Ok(features.len() - 1)
            };
            let pos = slot(&p.positive)?;
            let neg = slot(&p.negative)?;
            out.push((pos, neg));
        }
        Ok(Self { features, pairs: out })
    }
}

/// Score of one document and `∂S/∂θ` in [`ModelWeights::to_flat`] order.
pub fn score_gradient(features: &DocFeatures, weights: &ModelWeights) -> Result<(f64, Vec<f64>)> {
    check_feature_schema(features, weights)?;
    let layout = weights.layout();
    let mut grad = vec![0.0; layout.len()];
    let (kcount, layers) = (weights.kernel_count(), weights.layers);
    let mut deep = 0.0;
    for i in 0..features.terms.len() {
        for l in 0..layers {
            let pooled = kernel_pool_with_grad(features.row(i, l), &weights.kernels)?;
            for k in 0..kcount {
                let a = weights.alpha(k, l);
                deep += a * pooled.values[k];
                grad[layout.alpha.start + k * layers + l] += pooled.values[k];
                grad[layout.mu.start + k] += a * pooled.d_mu[k];
                if weights.kernels.sigma[k] >= SIGMA_MIN {
                    grad[layout.sigma.start + k] += a * pooled.d_sigma[k];
                }
            }
        }
    }
    let lex = &features.lexical.values;
    grad[layout.beta.clone()].copy_from_slice(lex);
    grad[layout.gamma_cls.clone()].copy_from_slice(&features.cls);
    grad[layout.gamma_others.clone()].copy_from_slice(&features.others);
    grad[layout.bias.clone()].fill(1.0);
    let lexi: f64 = weights.beta.iter().zip(lex).map(|(b, f)| b * f).sum();
    let cls: f64 = weights.gamma_cls.iter().zip(&features.cls).map(|(g, x)| g * x).sum();
    let others: f64 = weights.gamma_others.iter().zip(&features.others).map(|(g, z)| g * z).sum();
    let bias: f64 = weights.bias.iter().sum();
    Ok((deep + lexi + cls + others + bias, grad))
}

/// Loss of one pair and its analytic gradient. Widths sitting on the clamp
/// get no gradient that would push them below it.
pub fn pair_gradient(pos: &DocFeatures, neg: &DocFeatures, weights: &ModelWeights) -> Result<(f64, Vec<f64>)> {
    let (sp, gp) = score_gradient(pos, weights)?;
    let (sn, gn) = score_gradient(neg, weights)?;
    let g = sigmoid(sn - sp);
    let mut grad: Vec<f64> = gn.iter().zip(&gp).map(|(n, p)| g * (n - p)).collect();
    project_sigma(&mut grad, weights);
    Ok((pair_loss(sp, sn), grad))
}

fn project_sigma(grad: &mut [f64], weights: &ModelWeights) {
    let range = weights.layout().sigma;
    for (k, g) in grad[range].iter_mut().enumerate() {
        if weights.kernels.sigma[k] <= SIGMA_MIN && *g > 0.0 {
            *g = 0.0;
        }
    }
}

/// Pair loss evaluated through the scorer; used as the finite-difference oracle.
pub fn pair_loss_of(pos: &DocFeatures, neg: &DocFeatures, weights: &ModelWeights) -> Result<f64> {
    Ok(pair_loss(score_features(pos, weights)?.total, score_features(neg, weights)?.total))
}

/// Central-difference gradient of the pair loss with step `h`.
pub fn numeric_gradient(pos: &DocFeatures, neg: &DocFeatures, weights: &ModelWeights, h: f64) -> Result<Vec<f64>> {
    let base = weights.to_flat();
    let mut probe = weights.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        probe.set_flat(&flat)?;
        let up = pair_loss_of(pos, neg, &probe)?;
        flat[i] = base[i] - h;
        probe.set_flat(&flat)?;
        let down = pair_loss_of(pos, neg, &probe)?;
        flat[i] = base[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}` (expected sgd or adam)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Optimizer steps, one mini-batch each.
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub sigma_min: f64,
    pub optimizer: Optimizer,
    /// Components whose parameters stay fixed.
    pub frozen: Vec<Component>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            iterations: 1000,
            batch_size: 32,
            seed: 0,
            sigma_min: SIGMA_MIN,
            optimizer: Optimizer::Adam,
            frozen: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.sigma_min < SIGMA_MIN {
            return Err(Error::Config(format!("sigma_min may not go below {SIGMA_MIN}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub weights: ModelWeights,
    /// Mean mini-batch loss before each step.
    pub trace: Vec<(usize, f64)>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub pair_accuracy: f64,
}

impl TrainReport {
    /// Loss trace as CSV `iter,loss`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,loss\n");
        for (i, l) in &self.trace {
            let _ = writeln!(out, "{i},{l}");
        }
        out
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.trace_csv())?;
        Ok(())
    }
}

/// Mean pair loss and the fraction of pairs ranked correctly.
pub fn evaluate_pairs(set: &TrainingSet, weights: &ModelWeights) -> Result<(f64, f64)> {
    if set.pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    let scores = set
        .features
        .iter()
        .map(|f| score_features(f, weights).map(|s| s.total))
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &(p, n) in &set.pairs {
        loss += pair_loss(scores[p], scores[n]);
        correct += (scores[p] > scores[n]) as usize;
    }
    let count = set.pairs.len() as f64;
    Ok((loss / count, correct as f64 / count))
}

pub fn train(set: &TrainingSet, initial: &ModelWeights, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    initial.validate()?;
    let (initial_loss, initial_acc) = evaluate_pairs(set, initial)?;
    let mut weights = initial.clone();
    if config.iterations == 0 {
        return Ok(TrainReport { weights, trace: Vec::new(), initial_loss, final_loss: initial_loss, pair_accuracy: initial_acc });
    }

    let layout = weights.layout();
    let mut trainable = vec![true; layout.len()];
    for &c in &config.frozen {
        for r in layout.component(c) {
            trainable[r].fill(false);
        }
    }
    let mut rng = seeded_rng(config.seed);
    let mut order: Vec<usize> = (0..set.pairs.len()).collect();
    let mut cursor = order.len();
    let mut m = vec![0.0; layout.len()];
    let mut v = vec![0.0; layout.len()];
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut trace = Vec::with_capacity(config.iterations);
    let mut flat = weights.to_flat();

    for iter in 0..config.iterations {
        let mut grad = vec![0.0; layout.len()];
        let mut loss = 0.0;
        let batch = config.batch_size.min(order.len());
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let (p, n) = set.pairs[order[cursor]];
            cursor += 1;
            let (l, g) = pair_gradient(&set.features[p], &set.features[n], &weights)?;
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let scale = 1.0 / batch as f64;
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: iter, loss });
        }
        trace.push((iter, loss));

        let t = (iter + 1) as i32;
        for i in 0..flat.len() {
            if !trainable[i] {
                continue;
            }
            let g = grad[i] * scale;
            match config.optimizer {
                Optimizer::Sgd => flat[i] -= config.learning_rate * g,
                Optimizer::Adam => {
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let mh = m[i] / (1.0 - b1.powi(t));
                    let vh = v[i] / (1.0 - b2.powi(t));
                    flat[i] -= config.learning_rate * mh / (vh.sqrt() + eps);
                }
            }
        }
        for s in &mut flat[layout.sigma.clone()] {
            *s = s.max(config.sigma_min);
        }
        if let Some(bad) = flat.iter().find(|x| !x.is_finite()) {
            return Err(Error::Diverged { iteration: iter, loss: *bad });
        }
        weights.set_flat(&flat)?;
    }

    let (final_loss, pair_accuracy) = evaluate_pairs(set, &weights)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged { iteration: config.iterations, loss: final_loss });
    }
    Ok(TrainReport { weights, trace, initial_loss, final_loss, pair_accuracy })
}
