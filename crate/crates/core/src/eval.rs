//! TREC qrels/run handling and ranking metrics.
//!
//! Metrics are averaged over every query that appears in the qrels. A query
//! without any relevant judgement, or missing from the run, scores 0 and still
//! counts towards the mean. Unjudged documents are non-relevant.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scorer::{sort_ranked, RankedDoc};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    pub judgements: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    /// Parses `qid 0 docid grade` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut judgements: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            if cols.len() != 4 {
                return Err(Error::format("qrels", format!("line {}: expected `qid 0 docid grade`", no + 1)));
            }
            let grade: u32 = cols[3]
                .parse()
                .map_err(|_| Error::format("qrels", format!("line {}: grade `{}` is not a non-negative integer", no + 1, cols[3])))?;
            let q = judgements.entry(cols[0].to_string()).or_default();
            if q.insert(cols[2].to_string(), grade).is_some() {
                return Err(Error::format("qrels", format!("line {}: duplicate judgement for ({}, {})", no + 1, cols[0], cols[2])));
            }
        }
        Ok(Self { judgements })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.judgements {
            for (d, g) in docs {
                let _ = writeln!(out, "{q} 0 {d} {g}");
            }
        }
        out
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> u32 {
        self.judgements.get(qid).and_then(|d| d.get(doc_id)).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.judgements.values().all(|d| d.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    /// Per query, sorted by descending score then ascending doc id.
    pub queries: BTreeMap<String, Vec<RankedDoc>>,
}

impl Run {
    /// Parses `qid Q0 docid rank score tag` lines. The rank column is ignored
    /// in favour of the scores.
    pub fn parse(text: &str) -> Result<Self> {
        let mut queries: BTreeMap<String, Vec<RankedDoc>> = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            if cols.len() != 6 {
                return Err(Error::format("run", format!("line {}: expected `qid Q0 docid rank score tag`", no + 1)));
            }
            let score: f64 = cols[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::format("run", format!("line {}: bad score `{}`", no + 1, cols[4])))?;
            queries
                .entry(cols[0].to_string())
                .or_default()
                .push(RankedDoc { doc_id: cols[2].to_string(), score });
        }
        for docs in queries.values_mut() {
            sort_ranked(docs);
        }
        Ok(Self { queries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, qid: &str, mut ranked: Vec<RankedDoc>) {
        sort_ranked(&mut ranked);
        self.queries.insert(qid.to_string(), ranked);
    }

    pub fn to_text(&self, tag: &str) -> String {
        let mut out = String::new();
        for (q, docs) in &self.queries {
            out.push_str(&trec_lines(q, docs, tag));
        }
        out
    }
}

/// TREC run lines for one query, ranks starting at 1.
pub fn trec_lines(qid: &str, ranked: &[RankedDoc], tag: &str) -> String {
    let mut out = String::new();
    for (i, d) in ranked.iter().enumerate() {
        let _ = writeln!(out, "{qid} Q0 {} {} {} {tag}", d.doc_id, i + 1, d.score);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Ndcg(usize),
    Precision(usize),
    Mrr(usize),
}

impl Metric {
    /// Parses `ndcg@k`, `p@k` or `mrr@k`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, k) = s
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("metric `{s}` must look like ndcg@5, p@20 or mrr@10")))?;
        let k: usize = k.parse().map_err(|_| Error::Config(format!("bad cutoff in `{s}`")))?;
        if k == 0 {
            return Err(Error::Config("metric cutoff must be at least 1".into()));
        }
        match name.to_ascii_lowercase().as_str() {
            "ndcg" => Ok(Metric::Ndcg(k)),
            "p" | "precision" => Ok(Metric::Precision(k)),
            "mrr" => Ok(Metric::Mrr(k)),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Metric::Ndcg(k) => format!("ndcg@{k}"),
            Metric::Precision(k) => format!("p@{k}"),
            Metric::Mrr(k) => format!("mrr@{k}"),
        }
    }

    pub fn evaluate(&self, run: &Run, qrels: &Qrels) -> Result<MetricResult> {
        match *self {
            Metric::Ndcg(k) => ndcg_at_k(run, qrels, k),
            Metric::Precision(k) => p_at_k(run, qrels, k),
            Metric::Mrr(k) => mrr_at_k(run, qrels, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricResult {
    /// CSV `qid,metric,value` with a final `all` row holding the mean.
    pub fn to_csv(&self, metric: &str) -> String {
        let mut out = String::from("qid,metric,value\n");
        for (q, v) in &self.per_query {
            let _ = writeln!(out, "{q},{metric},{v}");
        }
        let _ = writeln!(out, "all,{metric},{}", self.mean);
        out
    }
}

fn per_query(run: &Run, qrels: &Qrels, k: usize, f: impl Fn(&[u32], &BTreeMap<String, u32>) -> f64) -> Result<MetricResult> {
    if k == 0 {
        return Err(Error::Config("metric cutoff must be at least 1".into()));
    }
    if qrels.is_empty() {
        return Err(Error::Eval("qrels contain no judgements".into()));
    }
    let mut out = BTreeMap::new();
    for (qid, judged) in &qrels.judgements {
        let grades: Vec<u32> = run
            .queries
            .get(qid)
            .map(|docs| docs.iter().take(k).map(|d| judged.get(&d.doc_id).copied().unwrap_or(0)).collect())
            .unwrap_or_default();
        out.insert(qid.clone(), f(&grades, judged));
    }
    let mean = out.values().sum::<f64>() / out.len() as f64;
    Ok(MetricResult { per_query: out, mean })
}

fn dcg(grades: impl IntoIterator<Item = u32>) -> f64 {
    grades
        .into_iter()
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Gain `2^rel - 1`, discount `1 / log2(rank + 1)`.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    per_query(run, qrels, k, |grades, judged| {
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(ideal.into_iter().take(k));
        if idcg == 0.0 {
            0.0
        } else {
            dcg(grades.iter().copied()) / idcg
        }
    })
}

/// Fraction of the top `k` with grade ≥ 1 (missing positions count as non-relevant).
pub fn p_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    per_query(run, qrels, k, |grades, _| grades.iter().filter(|&&g| g >= 1).count() as f64 / k as f64)
}

pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    per_query(run, qrels, k, |grades, _| {
        grades.iter().position(|&g| g >= 1).map_or(0.0, |r| 1.0 / (r + 1) as f64)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_difference: f64,
    /// `None` when the differences have zero variance.
    pub t: Option<f64>,
    pub p_value: f64,
    pub significant: bool,
    pub zero_variance: bool,
}

/// Two-sided paired t-test on `a - b`, significance at the 0.05 level.
/// The Student-t CDF comes from `statrs` (regularised incomplete beta).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Eval(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Eval("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if var <= (scale * 1e-12).powi(2) {
        return Ok(TTest { n, mean_difference: mean, t: None, p_value: 1.0, significant: false, zero_variance: true });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Eval(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { n, mean_difference: mean, t: Some(t), p_value: p, significant: p < 0.05, zero_variance: false })
}
