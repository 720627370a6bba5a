//! Query decomposition into token groups and composition of query-term
//! representations from pre-computed group embeddings.
//!
//! A query of `n` terms is decomposed into every uni-gram plus every ordered
//! pair `(a, b)` with `0 < b - a <= window`. Pairs weigh `1 / span`, uni-grams
//! `1 / (window + 1)`. A term's representation is the weighted mean of the
//! member vectors of the groups that contain it *and were found in the token
//! store*; the weights are renormalised per term over exactly those groups.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsh::{hamming_words, CosineTable, LshFootprint};
use crate::text::tokenize;
use crate::vector::DenseVector;

/// Separator between the two words of a pair group id (U+241F).
pub const PAIR_SEPARATOR: char = '\u{241F}';

pub const DEFAULT_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryTerm {
    pub text: String,
    pub position: usize,
}

/// Tokenizes `text` into positioned query terms.
pub fn query_terms(text: &str) -> Vec<QueryTerm> {
    tokenize(text)
        .into_iter()
        .enumerate()
        .map(|(position, text)| QueryTerm { text, position })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    Unigram,
    Pair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGroup {
    pub kind: GroupKind,
    /// Query positions of the member terms, in query order.
    pub members: Vec<usize>,
    pub span: Option<usize>,
    pub id: String,
}

impl TokenGroup {
    pub fn contains(&self, position: usize) -> bool {
        self.members.contains(&position)
    }
}

pub fn unigram_id(word: &str) -> String {
    word.to_string()
}

pub fn pair_id(first: &str, second: &str) -> String {
    format!("{first}{PAIR_SEPARATOR}{second}")
}

/// Weight of a group under the default scheme.
pub fn group_weight(group: &TokenGroup, window: usize) -> f64 {
    match group.span {
        Some(span) => 1.0 / span as f64,
        None => 1.0 / (window as f64 + 1.0),
    }
}

/// Selects which group families take part in composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionConfig {
    pub window: usize,
    pub use_unigrams: bool,
    pub use_pairs: bool,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            use_unigrams: true,
            use_pairs: true,
        }
    }
}

impl CompositionConfig {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn no_pairs(self) -> Self {
        Self {
            use_pairs: false,
            ..self
        }
    }

    pub fn no_unigrams(self) -> Self {
        Self {
            use_unigrams: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenGroupSet {
    pub terms: Vec<QueryTerm>,
    pub groups: Vec<TokenGroup>,
    pub weights: Vec<f64>,
    pub window: usize,
}

impl TokenGroupSet {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.id.as_str())
    }

    /// Indices of groups containing the term at `position`.
    pub fn groups_of(&self, position: usize) -> impl Iterator<Item = usize> + '_ {
        self.groups
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.contains(position))
            .map(|(i, _)| i)
    }
}

/// Full decomposition with the default weighting scheme.
pub fn decompose(query: &[QueryTerm], window: usize) -> Result<TokenGroupSet> {
    decompose_with(query, &CompositionConfig::with_window(window))
}

/// Decomposition under `config`. Disabled families are dropped from the set,
/// which is the same as forcing their weight to zero.
pub fn decompose_with(query: &[QueryTerm], config: &CompositionConfig) -> Result<TokenGroupSet> {
    if query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    for pair in query.windows(2) {
        if pair[1].position <= pair[0].position {
            return Err(Error::Config("query positions must be strictly increasing".into()));
        }
    }
    if let Some(t) = query.iter().find(|t| t.text.is_empty()) {
        return Err(Error::Config(format!("empty query term at position {}", t.position)));
    }
    let window = config.window;
    let mut groups = Vec::new();
    if config.use_unigrams {
        for t in query {
            groups.push(TokenGroup {
                kind: GroupKind::Unigram,
                members: vec![t.position],
                span: None,
                id: unigram_id(&t.text),
            });
        }
    }
    if config.use_pairs {
        for (a, first) in query.iter().enumerate() {
            for second in &query[a + 1..] {
                let span = second.position - first.position;
                if span > window {
                    break;
                }
                groups.push(TokenGroup {
                    kind: GroupKind::Pair,
                    members: vec![first.position, second.position],
                    span: Some(span),
                    id: pair_id(&first.text, &second.text),
                });
            }
        }
    }
    let weights = groups.iter().map(|g| group_weight(g, window)).collect();
    Ok(TokenGroupSet {
        terms: query.to_vec(),
        groups,
        weights,
        window,
    })
}

/// Per-layer representation of one term: dense vectors, footprints, or both.
/// Either list is empty when that form is absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayeredTermEmbedding {
    pub dense: Vec<DenseVector>,
    pub footprints: Vec<LshFootprint>,
}

impl LayeredTermEmbedding {
    pub fn layers(&self) -> usize {
        self.dense.len().max(self.footprints.len())
    }
}

/// Stored embedding of a token group: one member for uni-grams, two for pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGroupEmbedding {
    pub id: String,
    pub members: Vec<LayeredTermEmbedding>,
}

/// Read access to stored token-group embeddings. A missing group is `Ok(None)`.
pub trait GroupLookup {
    fn lookup(&self, id: &str) -> Result<Option<TokenGroupEmbedding>>;
}

impl GroupLookup for HashMap<String, TokenGroupEmbedding> {
    fn lookup(&self, id: &str) -> Result<Option<TokenGroupEmbedding>> {
        Ok(self.get(id).cloned())
    }
}

/// Adapts a closure into a [`GroupLookup`].
pub struct FnLookup<F>(pub F);

impl<F> GroupLookup for FnLookup<F>
where
    F: Fn(&str) -> Option<TokenGroupEmbedding>,
{
    fn lookup(&self, id: &str) -> Result<Option<TokenGroupEmbedding>> {
        Ok((self.0)(id))
    }
}

/// One found group's contribution to a query term.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub group: String,
    /// Normalised weight `w_t / ‖w‖₁`.
    pub weight: f64,
    pub embedding: LayeredTermEmbedding,
}

/// A query whose groups have been fetched: per term, the normalised
/// contributions of every found group containing it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedQuery {
    pub terms: Vec<QueryTerm>,
    pub contributions: Vec<Vec<Contribution>>,
}

impl ResolvedQuery {
    /// Fetches every group in `set` once and assigns member vectors to terms.
    pub fn resolve(set: &TokenGroupSet, lookup: &impl GroupLookup) -> Result<Self> {
        let mut fetched = Vec::with_capacity(set.groups.len());
        for g in &set.groups {
            let found = lookup.lookup(&g.id)?;
            if let Some(e) = &found {
                if e.members.len() != g.members.len() {
                    return Err(Error::format(
                        "token group",
                        format!("group `{}` has {} member vectors, expected {}", g.id, e.members.len(), g.members.len()),
                    ));
                }
            }
            fetched.push(found);
        }
        let mut contributions = Vec::with_capacity(set.terms.len());
        for term in &set.terms {
            let mut found = Vec::new();
            for gi in set.groups_of(term.position) {
                let Some(emb) = &fetched[gi] else { continue };
                let g = &set.groups[gi];
                let slot = g.members.iter().position(|&p| p == term.position).unwrap();
                found.push((g.id.clone(), set.weights[gi], emb.members[slot].clone()));
            }
            if found.is_empty() {
                return Err(Error::MissingTerm(term.text.clone()));
            }
            let total: f64 = found.iter().map(|(_, w, _)| w).sum();
            contributions.push(
                found
                    .into_iter()
                    .map(|(group, w, embedding)| Contribution {
                        group,
                        weight: w / total,
                        embedding,
                    })
                    .collect(),
            );
        }
        let resolved = Self {
            terms: set.terms.clone(),
            contributions,
        };
        resolved.check_layers()?;
        Ok(resolved)
    }

    fn check_layers(&self) -> Result<()> {
        let mut layers = None;
        for c in self.contributions.iter().flatten() {
            let l = c.embedding.layers();
            match layers {
                None => layers = Some(l),
                Some(expected) if expected != l => {
                    return Err(Error::DimensionMismatch { expected, actual: l })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn layers(&self) -> usize {
        self.contributions
            .first()
            .and_then(|c| c.first())
            .map(|c| c.embedding.layers())
            .unwrap_or(0)
    }

    /// Composed dense representation of term `i` at every layer.
    pub fn term_embedding(&self, i: usize) -> Result<Vec<DenseVector>> {
        let contributions = &self.contributions[i];
        let layers = contributions[0].embedding.dense.len();
        if layers == 0 {
            return Err(Error::Config(format!(
                "token groups for `{}` carry no dense vectors",
                self.terms[i].text
            )));
        }
        let dim = contributions[0].embedding.dense[0].dim();
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let mut acc = vec![0f64; dim];
            for c in contributions {
                let v = c.embedding.dense.get(l).ok_or(Error::DimensionMismatch {
                    expected: layers,
                    actual: c.embedding.dense.len(),
                })?;
                if v.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.dim(),
                    });
                }
                for (a, &x) in acc.iter_mut().zip(v.as_slice()) {
                    *a += c.weight * x as f64;
                }
            }
            out.push(DenseVector::new(acc.into_iter().map(|x| x as f32).collect())?);
        }
        Ok(out)
    }

    /// Weighted combination of per-group cosine estimates against one document
    /// term footprint at `layer`.
    pub fn similarity_lsh(&self, i: usize, doc_term: &LshFootprint, layer: usize) -> Result<f64> {
        let table = CosineTable::new(doc_term.bits());
        let mut sim = 0.0;
        for c in &self.contributions[i] {
            let fp = c.embedding.footprints.get(layer).ok_or_else(|| {
                Error::Config(format!("group `{}` has no footprint at layer {layer}", c.group))
            })?;
            if fp.bits() != doc_term.bits() {
                return Err(Error::FootprintMismatch(fp.bits(), doc_term.bits()));
            }
            sim += c.weight * table.get(hamming_words(fp.words(), doc_term.words()));
        }
        Ok(sim)
    }
}

/// Composed dense representation of `term` (all layers).
pub fn compose_term_embedding(
    term: &QueryTerm,
    set: &TokenGroupSet,
    lookup: &impl GroupLookup,
) -> Result<Vec<DenseVector>> {
    let (i, single) = single_term_set(term, set)?;
    ResolvedQuery::resolve(&single, lookup)?.term_embedding(i)
}

/// Composed LSH similarity of `term` against one document term footprint.
pub fn composed_similarity_lsh(
    term: &QueryTerm,
    set: &TokenGroupSet,
    lookup: &impl GroupLookup,
    doc_term: &LshFootprint,
    layer: usize,
) -> Result<f64> {
    let (i, single) = single_term_set(term, set)?;
    ResolvedQuery::resolve(&single, lookup)?.similarity_lsh(i, doc_term, layer)
}

// Restricts `set` to the groups containing `term` so that resolution does not
// fail on unrelated terms.
fn single_term_set(term: &QueryTerm, set: &TokenGroupSet) -> Result<(usize, TokenGroupSet)> {
    let i = set
        .terms
        .iter()
        .position(|t| t == term)
        .ok_or_else(|| Error::MissingTerm(term.text.clone()))?;
    let keep: Vec<usize> = set.groups_of(term.position).collect();
    Ok((
        0,
        TokenGroupSet {
            terms: vec![set.terms[i].clone()],
            groups: keep.iter().map(|&g| set.groups[g].clone()).collect(),
            weights: keep.iter().map(|&g| set.weights[g]).collect(),
            window: set.window,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::{cosine_estimate, HyperplaneSet};

    fn q(text: &str) -> Vec<QueryTerm> {
        query_terms(text)
    }

    fn dense(values: &[f32]) -> LayeredTermEmbedding {
        LayeredTermEmbedding {
            dense: vec![DenseVector::new(values.to_vec()).unwrap()],
            footprints: vec![],
        }
    }

    fn fp_only(fp: LshFootprint) -> LayeredTermEmbedding {
        LayeredTermEmbedding {
            dense: vec![],
            footprints: vec![fp],
        }
    }

    #[test]
    fn worked_example_groups() {
        let set = decompose(&q("neural ranking model"), 3).unwrap();
        let ids: Vec<&str> = set.ids().collect();
        assert_eq!(
            ids,
            vec![
                "neural",
                "ranking",
                "model",
                "neural\u{241F}ranking",
                "neural\u{241F}model",
                "ranking\u{241F}model",
            ]
        );
        assert_eq!(set.weights, vec![0.25, 0.25, 0.25, 1.0, 0.5, 1.0]);
    }

    #[test]
    fn single_term_and_zero_window() {
        let set = decompose(&q("neural"), 3).unwrap();
        assert_eq!(set.ids().collect::<Vec<_>>(), vec!["neural"]);
        let set = decompose(&q("neural ranking model"), 0).unwrap();
        assert!(set.groups.iter().all(|g| g.kind == GroupKind::Unigram));
        assert_eq!(set.len(), 3);
        assert_eq!(set.weights, vec![1.0; 3]);
    }

    #[test]
    fn empty_query_rejected() {
        assert!(matches!(decompose(&[], 3), Err(Error::EmptyQuery)));
    }

    #[test]
    fn window_limits_span() {
        let set = decompose(&q("a b c d e"), 2).unwrap();
        assert!(set.groups.iter().all(|g| g.span.unwrap_or(0) <= 2));
        // 5 uni-grams + 4 span-1 + 3 span-2
        assert_eq!(set.len(), 12);
    }

    #[test]
    fn duplicate_words_pair_up() {
        let set = decompose(&q("new york new"), 3).unwrap();
        assert!(set.ids().any(|id| id == pair_id("new", "new")));
        // both "new" occurrences share the uni-gram id but remain distinct groups
        assert_eq!(set.ids().filter(|&id| id == "new").count(), 2);
    }

    #[test]
    fn group_weight_scheme() {
        let set = decompose(&q("neural ranking model"), 3).unwrap();
        let by_id = |id: &str| set.groups.iter().find(|g| g.id == id).unwrap();
        assert_eq!(group_weight(by_id(&pair_id("neural", "ranking")), 3), 1.0);
        assert_eq!(group_weight(by_id(&pair_id("neural", "model")), 3), 0.5);
        assert_eq!(group_weight(by_id("neural"), 3), 0.25);
    }

    fn worked_store() -> HashMap<String, TokenGroupEmbedding> {
        let mut store = HashMap::new();
        store.insert(
            "neural".to_string(),
            TokenGroupEmbedding { id: "neural".into(), members: vec![dense(&[1.0, 0.0, 0.0])] },
        );
        store.insert(
            pair_id("neural", "model"),
            TokenGroupEmbedding {
                id: pair_id("neural", "model"),
                members: vec![dense(&[0.0, 1.0, 0.0]), dense(&[9.0, 9.0, 9.0])],
            },
        );
        store.insert(
            pair_id("neural", "ranking"),
            TokenGroupEmbedding {
                id: pair_id("neural", "ranking"),
                members: vec![dense(&[0.0, 0.0, 1.0]), dense(&[7.0, 7.0, 7.0])],
            },
        );
        store
    }

    #[test]
    fn worked_example_composition() {
        let terms = q("neural ranking model");
        let set = decompose(&terms, 3).unwrap();
        let store = worked_store();
        let e = compose_term_embedding(&terms[0], &set, &store).unwrap();
        let expected = [0.25 / 1.75, 0.5 / 1.75, 1.0 / 1.75];
        for (got, want) in e[0].as_slice().iter().zip(expected) {
            assert!((*got as f64 - want).abs() < 1e-6);
        }
        let resolved = ResolvedQuery::resolve(&decompose(&terms[..1], 3).unwrap(), &store).unwrap();
        assert_eq!(resolved.contributions[0].len(), 1);
    }

    #[test]
    fn unigram_only_is_identity() {
        let terms = q("neural ranking");
        let set = decompose(&terms, 3).unwrap();
        let mut store = HashMap::new();
        store.insert(
            "ranking".to_string(),
            TokenGroupEmbedding { id: "ranking".into(), members: vec![dense(&[0.5, -2.0, 3.25])] },
        );
        let e = compose_term_embedding(&terms[1], &set, &store).unwrap();
        assert_eq!(e[0].as_slice(), &[0.5, -2.0, 3.25]);
    }

    #[test]
    fn nothing_found_is_missing_term() {
        let terms = q("neural ranking");
        let set = decompose(&terms, 3).unwrap();
        let store: HashMap<String, TokenGroupEmbedding> = HashMap::new();
        assert!(matches!(
            compose_term_embedding(&terms[0], &set, &store),
            Err(Error::MissingTerm(t)) if t == "neural"
        ));
    }

    #[test]
    fn missing_pairs_degrade_to_unigrams() {
        let terms = q("neural ranking model");
        let set = decompose(&terms, 3).unwrap();
        let mut store = worked_store();
        store.retain(|k, _| !k.contains(PAIR_SEPARATOR));
        let e = compose_term_embedding(&terms[0], &set, &store).unwrap();
        assert_eq!(e[0].as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn lsh_combination_hand_arithmetic() {
        // estimates 1.0 (identical), 0.0 (half the bits), -1.0 (complement)
        let doc = LshFootprint::from_words(vec![0x0f0f_0f0f_0f0f_0f0f]);
        let half = LshFootprint::from_words(vec![doc.words()[0] ^ 0xffff_ffff]);
        assert_eq!(crate::lsh::hamming(&doc, &half).unwrap(), 32);
        let terms = q("neural ranking model");
        let set = decompose(&terms, 3).unwrap();
        let mut store = HashMap::new();
        store.insert("neural".to_string(), TokenGroupEmbedding { id: "neural".into(), members: vec![fp_only(doc.clone())] });
        let nm = pair_id("neural", "model");
        store.insert(nm.clone(), TokenGroupEmbedding { id: nm, members: vec![fp_only(half), fp_only(doc.clone())] });
        let nr = pair_id("neural", "ranking");
        store.insert(nr.clone(), TokenGroupEmbedding { id: nr, members: vec![fp_only(doc.complement()), fp_only(doc.clone())] });
        let s = composed_similarity_lsh(&terms[0], &set, &store, &doc, 0).unwrap();
        assert!((s - (0.25 - 1.0) / 1.75).abs() < 1e-12);
        assert!((s + 0.428_571).abs() < 1e-6);
    }

    #[test]
    fn identical_footprints_give_one() {
        let planes = HyperplaneSet::sample(1, 128, 3).unwrap();
        let fp = planes.footprint(&[1.0, 2.0, 3.0]).unwrap();
        let terms = q("neural ranking");
        let set = decompose(&terms, 3).unwrap();
        let mut store = HashMap::new();
        store.insert("neural".to_string(), TokenGroupEmbedding { id: "neural".into(), members: vec![fp_only(fp.clone())] });
        let nr = pair_id("neural", "ranking");
        store.insert(nr.clone(), TokenGroupEmbedding { id: nr, members: vec![fp_only(fp.clone()), fp_only(fp.clone())] });
        let doc = planes.footprint(&[3.0, 1.0, -1.0]).unwrap();
        let s = composed_similarity_lsh(&terms[0], &set, &store, &fp, 0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s = composed_similarity_lsh(&terms[0], &set, &store, &doc, 0).unwrap();
        assert!((s - cosine_estimate(&fp, &doc).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn variants_are_consistent_with_weights() {
        let terms = q("neural ranking model");
        let no_pairs = decompose_with(&terms, &CompositionConfig::default().no_pairs()).unwrap();
        assert!(no_pairs.groups.iter().all(|g| g.kind == GroupKind::Unigram));
        let no_uni = decompose_with(&terms, &CompositionConfig::default().no_unigrams()).unwrap();
        assert!(no_uni.groups.iter().all(|g| g.kind == GroupKind::Pair));
        let w1 = decompose_with(&terms, &CompositionConfig::with_window(1)).unwrap();
        assert_eq!(w1.len(), 5);
        for (g, w) in w1.groups.iter().zip(&w1.weights) {
            assert_eq!(*w, group_weight(g, 1));
        }
    }
}
