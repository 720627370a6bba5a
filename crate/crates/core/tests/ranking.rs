mod common;

use std::sync::OnceLock;

use proptest::prelude::*;

use becr_core::eval::{mrr_at_k, ndcg_at_k, p_at_k, Qrels, Run};
use becr_core::lsh::seeded_rng;
use becr_core::scorer::{Mode, RankedDoc};
use becr_core::synth::{generate, oracle_weights, SynthConfig, SynthCorpus};
use becr_core::lexical::LexicalSchema;
use becr_core::weights::{Component, ModelWeights};

fn fixture() -> &'static (SynthCorpus, common::World) {
    static CELL: OnceLock<(SynthCorpus, common::World)> = OnceLock::new();
    CELL.get_or_init(|| {
        let c = generate(&SynthConfig { queries: 3, candidates: 12, ..SynthConfig::default() }).unwrap();
        let w = common::world(&c, 256, 9);
        (c, w)
    })
}

fn candidates(c: &SynthCorpus, qid: &str) -> Vec<String> {
    c.candidates.queries[qid].iter().map(|d| d.doc_id.clone()).collect()
}

fn random_weights(seed: u64) -> ModelWeights {
    use rand::Rng;
    let (_, w) = fixture();
    let mut rng = seeded_rng(seed);
    let mut weights = w.initial_weights();
    weights.alpha.iter_mut().for_each(|a| *a = rng.random_range(-1.0..1.0));
    weights.beta.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
    weights.gamma_cls.iter_mut().for_each(|g| *g = rng.random_range(-0.5..0.5));
    weights.gamma_others.iter_mut().for_each(|g| *g = rng.random_range(-0.5..0.5));
    weights.bias = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    weights
}

#[test]
fn oracle_weights_rank_planted_relevance_first() {
    let (c, w) = fixture();
    let weights = oracle_weights(w.layers, w.dim, LexicalSchema::full(), vec![]).unwrap();
    let split = common::Split { train: vec![], held_out: c.queries.iter().map(|q| q.0.clone()).collect() };
    for mode in [Mode::Full, Mode::Lsh] {
        let ndcg = common::held_out_ndcg(c, w, &split.held_out, &weights, mode, 5);
        assert!((ndcg - 1.0).abs() < 1e-12, "{mode:?}: {ndcg}");
    }
}

#[test]
fn thread_count_does_not_change_ranking() {
    let (c, w) = fixture();
    let weights = random_weights(3);
    for (qid, text) in &c.queries {
        let cands = candidates(c, qid);
        let one = w.reranker(&weights, Mode::Lsh).rerank(text, &cands, None).unwrap();
        let four = w.reranker(&weights, Mode::Lsh).with_threads(4).rerank(text, &cands, None).unwrap();
        assert_eq!(one.ranked, four.ranked);
    }
}

#[test]
fn ablated_component_contributes_nothing() {
    let (c, w) = fixture();
    let (qid, text) = &c.queries[0];
    for comp in Component::ALL {
        let mut weights = random_weights(5);
        weights.zero_component(comp);
        let r = w.reranker(&weights, Mode::Full);
        let q = r.prepare(text).unwrap();
        for id in candidates(c, qid) {
            let s = r.score(&q, &id).unwrap();
            let part = match comp {
                Component::Deep => s.deep,
                Component::Lexical => s.lexical,
                Component::Others => s.others,
            };
            assert_eq!(part, 0.0, "{comp:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ranking_is_deterministic_and_order_free(seed in 0u64..1000, rotate in 0usize..12) {
        let (c, w) = fixture();
        let weights = random_weights(seed);
        let (qid, text) = &c.queries[(seed % 3) as usize];
        let mut cands = candidates(c, qid);
        let r = w.reranker(&weights, Mode::Lsh);
        let a = r.rerank(text, &cands, None).unwrap().ranked;
        let shift = rotate % cands.len();
        cands.rotate_left(shift);
        let b = r.rerank(text, &cands, None).unwrap().ranked;
        prop_assert_eq!(&a, &b);
        prop_assert!(a.windows(2).all(|p| p[0].score > p[1].score || (p[0].score == p[1].score && p[0].doc_id < p[1].doc_id)));
    }

    #[test]
    fn score_is_the_sum_of_its_parts(seed in 0u64..1000) {
        let (c, w) = fixture();
        let weights = random_weights(seed);
        let r = w.reranker(&weights, Mode::Lsh);
        let (qid, text) = &c.queries[(seed % 3) as usize];
        let q = r.prepare(text).unwrap();
        for id in candidates(c, qid) {
            let s = r.score(&q, &id).unwrap();
            let deep: f64 = s.deep_terms.iter().map(|t| t.value).sum::<f64>() + s.bias[0];
            let lexical: f64 = s.lexical_features.iter().map(|t| t.value).sum::<f64>() + s.bias[1];
            let lexical_terms: f64 = s.lexical_terms.iter().map(|t| t.value).sum::<f64>() + s.lexical_rest + s.bias[1];
            let others: f64 = s.other_features.iter().map(|t| t.value).sum::<f64>() + s.bias[2];
            prop_assert!((s.deep - deep).abs() < 1e-9);
            prop_assert!((s.lexical - lexical).abs() < 1e-9);
            prop_assert!((s.lexical - lexical_terms).abs() < 1e-9);
            prop_assert!((s.others - others).abs() < 1e-9);
            prop_assert!((s.total - s.deep - s.lexical - s.others).abs() < 1e-9);
        }
    }

    #[test]
    fn score_responds_linearly_to_a_lexical_weight(seed in 0u64..1000, delta in -1.0f64..1.0) {
        let (c, w) = fixture();
        let weights = random_weights(seed);
        let j = (seed as usize) % weights.beta.len();
        let mut bumped = weights.clone();
        bumped.beta[j] += delta;
        let (qid, text) = &c.queries[0];
        let base = w.reranker(&weights, Mode::Full);
        let moved = w.reranker(&bumped, Mode::Full);
        let (qa, qb) = (base.prepare(text).unwrap(), moved.prepare(text).unwrap());
        for id in candidates(c, qid) {
            let f = base.features(&qa, &w.docs[&id]).unwrap().lexical.values[j];
            let diff = moved.score(&qb, &id).unwrap().total - base.score(&qa, &id).unwrap().total;
            prop_assert!((diff - delta * f).abs() < 1e-9 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval(grades in prop::collection::vec(0u32..4, 1..15), perm_seed in 0u64..100) {
        use rand::seq::SliceRandom;
        let mut qrels = Qrels::default();
        let judged = grades.iter().enumerate().map(|(i, g)| (format!("d{i}"), *g)).collect();
        qrels.judgements.insert("q".into(), judged);
        let mut ids: Vec<usize> = (0..grades.len()).collect();
        ids.shuffle(&mut seeded_rng(perm_seed));
        let mut run = Run::default();
        let n = ids.len();
        run.insert("q", ids.iter().enumerate().map(|(r, i)| RankedDoc { doc_id: format!("d{i}"), score: (n - r) as f64 }).collect());
        for k in [1, 3, 5, 10] {
            for v in [ndcg_at_k(&run, &qrels, k).unwrap().mean, p_at_k(&run, &qrels, k).unwrap().mean, mrr_at_k(&run, &qrels, k).unwrap().mean] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        let mut ideal: Vec<usize> = (0..grades.len()).collect();
        ideal.sort_by_key(|&i| std::cmp::Reverse(grades[i]));
        let mut best = Run::default();
        best.insert("q", ideal.iter().enumerate().map(|(r, i)| RankedDoc { doc_id: format!("d{i}"), score: (n - r) as f64 }).collect());
        let top = ndcg_at_k(&best, &qrels, 5).unwrap().mean;
        prop_assert!(top == 1.0 || grades.iter().all(|&g| g == 0));
        prop_assert!(top >= ndcg_at_k(&run, &qrels, 5).unwrap().mean - 1e-12);
    }
}
