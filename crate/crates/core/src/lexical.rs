//! Classical term-matching features: TF-IDF, BM25 and query-term proximity
//! over the title and body fields.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_preamble, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Field {
    Title,
    Body,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Body => "body",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Field::Title => 0,
            Field::Body => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Field::Title),
            1 => Ok(Field::Body),
            other => Err(Error::format("field stats", format!("unknown field code {other}"))),
        }
    }
}

/// Occurrence data for one field of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldStats {
    pub field: Field,
    pub length: u32,
    /// term → ascending, unique positions.
    pub positions: BTreeMap<String, Vec<u32>>,
}

impl FieldStats {
    pub fn from_text(field: Field, text: &str) -> Self {
        Self::from_tokens(field, &tokenize(text))
    }

    pub fn from_tokens(field: Field, tokens: &[String]) -> Self {
        let mut positions: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            positions.entry(t.clone()).or_default().push(i as u32);
        }
        Self {
            field,
            length: tokens.len() as u32,
            positions,
        }
    }

    pub fn tf(&self, term: &str) -> u32 {
        self.positions.get(term).map_or(0, |p| p.len() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        for (term, pos) in &self.positions {
            if pos.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::format("field stats", format!("positions of `{term}` not strictly ascending")));
            }
            if pos.last().is_some_and(|&p| p >= self.length) {
                return Err(Error::format("field stats", format!("position of `{term}` beyond field length")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldCorpusStats {
    pub total_length: u64,
    pub df: HashMap<String, u64>,
}

/// Collection-level statistics needed by the IDF and length normalisations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    pub doc_count: u64,
    pub fields: BTreeMap<Field, FieldCorpusStats>,
}

const STATS_MAGIC: &[u8; 8] = b"BECRSTA\0";
const STATS_VERSION: u32 = 1;

impl CorpusStats {
    /// Adds one document's field statistics.
    pub fn add_document(&mut self, fields: &[FieldStats]) {
        self.doc_count += 1;
        for f in fields {
            let entry = self.fields.entry(f.field).or_default();
            entry.total_length += f.length as u64;
            for term in f.positions.keys() {
                *entry.df.entry(term.clone()).or_default() += 1;
            }
        }
    }

    pub fn avg_length(&self, field: Field) -> f64 {
        match self.fields.get(&field) {
            Some(f) if self.doc_count > 0 => f.total_length as f64 / self.doc_count as f64,
            _ => 0.0,
        }
    }

    pub fn df(&self, field: Field, term: &str) -> u64 {
        self.fields
            .get(&field)
            .and_then(|f| f.df.get(term))
            .copied()
            .unwrap_or(0)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.bytes(STATS_MAGIC);
        w.u32(STATS_VERSION);
        w.u64(self.doc_count);
        w.u8(self.fields.len() as u8);
        for (field, stats) in &self.fields {
            w.u8(field.code());
            w.u64(stats.total_length);
            w.u32(stats.df.len() as u32);
            let mut terms: Vec<_> = stats.df.iter().collect();
            terms.sort();
            for (term, df) in terms {
                w.str16(term)?;
                w.u64(*df);
            }
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf, "corpus stats");
        read_preamble(&mut r, STATS_MAGIC, STATS_VERSION)?;
        let doc_count = r.u64()?;
        let mut fields = BTreeMap::new();
        for _ in 0..r.u8()? {
            let field = Field::from_code(r.u8()?)?;
            let total_length = r.u64()?;
            let n = r.u32()? as usize;
            let mut df = HashMap::with_capacity(n);
            for _ in 0..n {
                let term = r.str16()?;
                let d = r.u64()?;
                if d > doc_count {
                    return Err(Error::format("corpus stats", format!("df({term}) = {d} exceeds N = {doc_count}")));
                }
                df.insert(term, d);
            }
            fields.insert(field, FieldCorpusStats { total_length, df });
        }
        r.expect_end()?;
        Ok(Self { doc_count, fields })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// `ln((N - df + 0.5) / (df + 0.5) + 1)`.
pub fn bm25_idf(doc_count: u64, df: u64) -> f64 {
    let n = doc_count as f64;
    let df = df.min(doc_count) as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

fn bm25_tf(tf: f64, len: f64, avg_len: f64, params: Bm25Params) -> f64 {
    if tf <= 0.0 {
        return 0.0;
    }
    let norm = if avg_len > 0.0 { len / avg_len } else { 1.0 };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

pub fn bm25(term: &str, field: &FieldStats, corpus: &CorpusStats, params: Bm25Params) -> f64 {
    let tf = field.tf(term);
    if tf == 0 {
        return 0.0;
    }
    bm25_idf(corpus.doc_count, corpus.df(field.field, term))
        * bm25_tf(tf as f64, field.length as f64, corpus.avg_length(field.field), params)
}

/// `tf · ln(N / df)`; zero when the term is absent or unseen in the corpus.
pub fn tfidf(term: &str, field: &FieldStats, corpus: &CorpusStats) -> f64 {
    let tf = field.tf(term);
    let df = corpus.df(field.field, term);
    if tf == 0 || df == 0 {
        return 0.0;
    }
    tf as f64 * (corpus.doc_count as f64 / df as f64).ln()
}

fn min_distance(a: &[u32], b: &[u32]) -> Option<u32> {
    let (mut i, mut j) = (0, 0);
    let mut best: Option<u32> = None;
    while i < a.len() && j < b.len() {
        let d = a[i].abs_diff(b[j]);
        best = Some(best.map_or(d, |x| x.min(d)));
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// Proximity values `1/d²` for every unordered pair of distinct query terms
/// that both occur in `field`, `d` being their closest occurrence distance.
pub fn inv_min_dist_values(terms: &[&str], field: &FieldStats) -> Vec<f64> {
    let unique = unique_terms(terms);
    let mut out = Vec::new();
    for (i, a) in unique.iter().enumerate() {
        for b in &unique[i + 1..] {
            let (Some(pa), Some(pb)) = (field.positions.get(*a), field.positions.get(*b)) else {
                continue;
            };
            if let Some(d) = min_distance(pa, pb) {
                let d = d.max(1) as f64;
                out.push(1.0 / (d * d));
            }
        }
    }
    out
}

/// `(max, min, avg)` of the pair proximity values; all zero without a pair.
pub fn inv_min_dist_features(terms: &[&str], field: &FieldStats) -> (f64, f64, f64) {
    let a = Aggregate::of(&inv_min_dist_values(terms, field));
    (a.max, a.min, a.avg)
}

fn unique_terms<'a>(terms: &[&'a str]) -> Vec<&'a str> {
    let mut seen = Vec::new();
    for &t in terms {
        if !seen.contains(&t) {
            seen.push(t);
        }
    }
    seen
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Aggregate {
    pub max: f64,
    pub min: f64,
    pub avg: f64,
    pub sum: f64,
    pub argmax: usize,
    pub argmin: usize,
}

impl Aggregate {
    /// Aggregates over `values`; an empty slice yields all zeros.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut a = Self {
            max: values[0],
            min: values[0],
            ..Self::default()
        };
        for (i, &v) in values.iter().enumerate() {
            if v > a.max {
                a.max = v;
                a.argmax = i;
            }
            if v < a.min {
                a.min = v;
                a.argmin = i;
            }
            a.sum += v;
        }
        a.avg = a.sum / values.len() as f64;
        a
    }
}

/// Co-occurrence window used by the optional pair-BM25 family.
pub const PAIR_BM25_WINDOW: u32 = 8;

/// Which feature families are emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalSchema {
    /// Title-field features (absent for passage-style corpora).
    pub title: bool,
    /// BM25 over query-pair co-occurrences; off in the default schema.
    pub pair_bm25: bool,
}

impl Default for LexicalSchema {
    fn default() -> Self {
        Self::full()
    }
}

impl LexicalSchema {
    pub fn full() -> Self {
        Self { title: true, pair_bm25: false }
    }

    pub fn passage() -> Self {
        Self { title: false, pair_bm25: false }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "passage" => Ok(Self::passage()),
            "full+pairs" => Ok(Self { title: true, pair_bm25: true }),
            "passage+pairs" => Ok(Self { title: false, pair_bm25: true }),
            other => Err(Error::Config(format!("unknown lexical schema `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.title, self.pair_bm25) {
            (true, false) => "full",
            (false, false) => "passage",
            (true, true) => "full+pairs",
            (false, true) => "passage+pairs",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        self.title as u8 | (self.pair_bm25 as u8) << 1
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        if code > 3 {
            return Err(Error::format("lexical schema", format!("unknown code {code}")));
        }
        Ok(Self { title: code & 1 == 1, pair_bm25: code & 2 == 2 })
    }

    fn fields(&self) -> Vec<Field> {
        if self.title {
            vec![Field::Title, Field::Body]
        } else {
            vec![Field::Body]
        }
    }

    /// Canonical feature names, in vector order.
    pub fn feature_names(&self) -> Vec<String> {
        self.layout().into_iter().map(|slot| slot.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.layout().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn layout(&self) -> Vec<Slot> {
        let fields = self.fields();
        let mut out = Vec::new();
        for family in [Family::Tfidf, Family::Bm25] {
            for &field in &fields {
                for agg in [Agg::Max, Agg::Min, Agg::Avg, Agg::Sum] {
                    out.push(Slot::Term { family, field: Some(field), agg });
                }
            }
            if self.title {
                out.push(Slot::Term { family, field: None, agg: Agg::Sum });
            }
        }
        for &field in &fields {
            for agg in [Agg::Max, Agg::Min, Agg::Avg] {
                out.push(Slot::Proximity { field, agg });
            }
        }
        if self.pair_bm25 {
            for &field in &fields {
                for agg in [Agg::Max, Agg::Min, Agg::Avg, Agg::Sum] {
                    out.push(Slot::PairBm25 { field, agg });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Tfidf,
    Bm25,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Agg {
    Max,
    Min,
    Avg,
    Sum,
}

impl Agg {
    fn name(self) -> &'static str {
        match self {
            Agg::Max => "max",
            Agg::Min => "min",
            Agg::Avg => "avg",
            Agg::Sum => "sum",
        }
    }

    fn pick(self, a: &Aggregate) -> f64 {
        match self {
            Agg::Max => a.max,
            Agg::Min => a.min,
            Agg::Avg => a.avg,
            Agg::Sum => a.sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Per-term family; `field: None` is the body+title sum.
    Term { family: Family, field: Option<Field>, agg: Agg },
    Proximity { field: Field, agg: Agg },
    PairBm25 { field: Field, agg: Agg },
}

impl Slot {
    fn name(self) -> String {
        match self {
            Slot::Term { family, field, agg } => {
                let fam = match family {
                    Family::Tfidf => "tfidf",
                    Family::Bm25 => "bm25",
                };
                match field {
                    Some(f) => format!("{} {fam} in {}", agg.name(), f.name()),
                    None => format!("sum {fam} in body and title"),
                }
            }
            Slot::Proximity { field, agg } => format!("{} inv_min_dist in {}", agg.name(), field.name()),
            Slot::PairBm25 { field, agg } => format!("{} pair_bm25 in {}", agg.name(), field.name()),
        }
    }
}

/// Raw per-term values for one unique query term.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermLexical {
    pub term: String,
    /// Query position of the first occurrence.
    pub position: usize,
    pub tfidf_title: f64,
    pub tfidf_body: f64,
    pub bm25_title: f64,
    pub bm25_body: f64,
}

impl TermLexical {
    fn value(&self, family: Family, field: Option<Field>) -> f64 {
        match (family, field) {
            (Family::Tfidf, Some(Field::Title)) => self.tfidf_title,
            (Family::Tfidf, Some(Field::Body)) => self.tfidf_body,
            (Family::Tfidf, None) => self.tfidf_title + self.tfidf_body,
            (Family::Bm25, Some(Field::Title)) => self.bm25_title,
            (Family::Bm25, Some(Field::Body)) => self.bm25_body,
            (Family::Bm25, None) => self.bm25_title + self.bm25_body,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalFeatureVector {
    pub schema: LexicalSchema,
    pub values: Vec<f64>,
    pub per_term: Vec<TermLexical>,
}

impl LexicalFeatureVector {
    pub fn names(&self) -> Vec<String> {
        self.schema.feature_names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names().iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Splits `Σ β_i f_i` into per-term shares plus a remainder for the
    /// pair-level families. Sum and average slots are shared by every term in
    /// proportion to its value, max/min slots go to the arg-max/arg-min term.
    pub fn attribute(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let n = self.per_term.len();
        let mut per_term = vec![0.0; n];
        let mut rest = 0.0;
        for ((slot, &b), &v) in self.schema.layout().iter().zip(beta).zip(&self.values) {
            match *slot {
                Slot::Term { family, field, agg } => {
                    let vals: Vec<f64> = self.per_term.iter().map(|t| t.value(family, field)).collect();
                    let a = Aggregate::of(&vals);
                    match agg {
                        Agg::Sum => per_term.iter_mut().zip(&vals).for_each(|(p, x)| *p += b * x),
                        Agg::Avg => per_term.iter_mut().zip(&vals).for_each(|(p, x)| *p += b * x / n as f64),
                        Agg::Max if n > 0 => per_term[a.argmax] += b * v,
                        Agg::Min if n > 0 => per_term[a.argmin] += b * v,
                        _ => {}
                    }
                }
                Slot::Proximity { .. } | Slot::PairBm25 { .. } => rest += b * v,
            }
        }
        (per_term, rest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LexicalConfig {
    pub schema: LexicalSchema,
    pub bm25: Bm25Params,
}

fn field_of<'a>(fields: &'a [FieldStats], field: Field) -> Result<&'a FieldStats> {
    fields
        .iter()
        .find(|f| f.field == field)
        .ok_or_else(|| Error::Schema(format!("document has no `{}` field statistics", field.name())))
}

/// Pair co-occurrence count within [`PAIR_BM25_WINDOW`].
fn pair_cooccurrences(a: &[u32], b: &[u32]) -> u32 {
    let mut count = 0;
    for &pa in a {
        count += b.iter().filter(|&&pb| pa.abs_diff(pb) <= PAIR_BM25_WINDOW && pa != pb).count() as u32;
    }
    count
}

/// Pair-BM25 values: co-occurrence count as tf, and the IDF of the rarer
/// member standing in for the unknown pair document frequency.
fn pair_bm25_values(terms: &[&str], field: &FieldStats, corpus: &CorpusStats, params: Bm25Params) -> Vec<f64> {
    let unique = unique_terms(terms);
    let avg = corpus.avg_length(field.field);
    let mut out = Vec::new();
    for (i, a) in unique.iter().enumerate() {
        for b in &unique[i + 1..] {
            let tf = match (field.positions.get(*a), field.positions.get(*b)) {
                (Some(pa), Some(pb)) => pair_cooccurrences(pa, pb),
                _ => 0,
            };
            let df = corpus.df(field.field, a).min(corpus.df(field.field, b)).max(1);
            out.push(bm25_idf(corpus.doc_count, df) * bm25_tf(tf as f64, field.length as f64, avg, params));
        }
    }
    out
}

/// Full lexical feature vector for `query_terms` against one document.
pub fn assemble_lexical_features(
    query_terms: &[&str],
    fields: &[FieldStats],
    corpus: &CorpusStats,
    config: &LexicalConfig,
) -> Result<LexicalFeatureVector> {
    let schema = config.schema;
    let body = field_of(fields, Field::Body)?;
    let title = if schema.title { Some(field_of(fields, Field::Title)?) } else { None };

    let mut per_term: Vec<TermLexical> = Vec::new();
    for (position, &term) in query_terms.iter().enumerate() {
        if per_term.iter().any(|t| t.term == term) {
            continue;
        }
        let mut t = TermLexical {
            term: term.to_string(),
            position,
            tfidf_body: tfidf(term, body, corpus),
            bm25_body: bm25(term, body, corpus, config.bm25),
            ..TermLexical::default()
        };
        if let Some(title) = title {
            t.tfidf_title = tfidf(term, title, corpus);
            t.bm25_title = bm25(term, title, corpus, config.bm25);
        }
        per_term.push(t);
    }

    let mut values = Vec::with_capacity(schema.len());
    for slot in schema.layout() {
        let v = match slot {
            Slot::Term { family, field, agg } => {
                let vals: Vec<f64> = per_term.iter().map(|t| t.value(family, field)).collect();
                agg.pick(&Aggregate::of(&vals))
            }
            Slot::Proximity { field, agg } => {
                let f = if field == Field::Title { title.unwrap() } else { body };
                agg.pick(&Aggregate::of(&inv_min_dist_values(query_terms, f)))
            }
            Slot::PairBm25 { field, agg } => {
                let f = if field == Field::Title { title.unwrap() } else { body };
                agg.pick(&Aggregate::of(&pair_bm25_values(query_terms, f, corpus, config.bm25)))
            }
        };
        values.push(v);
    }
    Ok(LexicalFeatureVector { schema, values, per_term })
}
