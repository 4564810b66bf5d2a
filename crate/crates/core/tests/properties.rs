//! Property tests for the invariants that span modules: serialization
//! round trips, count-space linearity, partition and boundary exactness.

use std::collections::BTreeSet;

use proptest::prelude::*;
use waterdrum::attacks::{decoy_curve, threshold_grid, DecoyObservation};
use waterdrum::config::ExperimentConfig;
use waterdrum::io::{read_corpus_from, write_corpus_to};
use waterdrum::prf::derive_rng;
use waterdrum::toylm::{train, Bias, BiasSpec, Generator, NGramModel};
use waterdrum::types::{CalibrationMode, Corpus, Document, DuplicateMode, SplitSpec, TokenId, WatermarkKey, BOS};
use waterdrum::unlearn::{partial_retrain, retrain};
use waterdrum::watermark::{fidelity_tv, verify};

const V: usize = 24;

fn docs(max_docs: usize) -> impl Strategy<Value = Vec<Vec<TokenId>>> {
    prop::collection::vec(prop::collection::vec(1..V as TokenId, 1..30), 1..max_docs)
}

fn corpus(owner: usize, first_id: usize, tokens: Vec<Vec<TokenId>>) -> Corpus {
    let docs = tokens.into_iter().enumerate().map(|(i, t)| Document::new(owner, first_id + i, t)).collect();
    Corpus::new(V, docs).unwrap()
}

fn model_bytes(m: &NGramModel) -> String {
    m.to_json().to_string()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_jsonl_round_trip(tokens in docs(8), tagged in any::<bool>(), mu in any::<u64>()) {
        let mut c = corpus(3, 0, tokens);
        if tagged {
            c = c.with_tags([(3, mu)].into()).unwrap();
        }
        let mut buf = Vec::new();
        write_corpus_to(&c, &mut buf).unwrap();
        prop_assert_eq!(read_corpus_from(buf.as_slice(), V).unwrap(), c);
    }

    #[test]
    fn model_json_round_trip(tokens in docs(6), order in 2usize..4, alpha in 0.01f64..2.0) {
        let m = train(&corpus(0, 0, tokens), order, alpha, 1.0).unwrap();
        let back = NGramModel::from_json(&m.to_json()).unwrap();
        prop_assert_eq!(model_bytes(&back), model_bytes(&m));
    }

    #[test]
    fn train_union_is_merge(a in docs(5), b in docs(5), order in 2usize..4) {
        let (ca, cb) = (corpus(0, 0, a), corpus(1, 0, b));
        let union = train(&ca.union(&cb).unwrap(), order, 0.1, 1.0).unwrap();
        let merged = NGramModel::merge(&train(&ca, order, 0.1, 1.0).unwrap(), &train(&cb, order, 0.1, 1.0).unwrap(), 1.0, 1.0).unwrap();
        prop_assert_eq!(model_bytes(&union), model_bytes(&merged));
    }

    #[test]
    fn conditionals_are_distributions(tokens in docs(5), history in prop::collection::vec(1..V as TokenId, 0..4)) {
        let m = train(&corpus(0, 0, tokens), 2, 0.1, 1.0).unwrap();
        for (_, row) in m.rows() {
            prop_assert!(row.counts().iter().all(|&c| c >= 0.0));
        }
        let mut pad = Vec::new();
        let ctx = m.context_of(&history, &mut pad).to_vec();
        let total: f64 = (0..V as TokenId).map(|t| m.logprob(t, &ctx).exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let p = Generator::new(&m, BiasSpec::single(Bias::Waterfall { key: WatermarkKey::with_mu(5) })).distribution(&history);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(p[BOS as usize], 0.0);
    }

    #[test]
    fn generation_stays_in_vocab(tokens in docs(4), seed in any::<u64>(), len in 0usize..50, prompt in prop::collection::vec(1..V as TokenId, 1..4)) {
        let m = train(&corpus(0, 0, tokens), 2, 0.1, 1.0).unwrap();
        let out = Generator::unbiased(&m).generate(&prompt, len, &mut derive_rng(seed, &[]));
        prop_assert_eq!(out.len(), len);
        prop_assert!(out.iter().all(|&t| t != BOS && (t as usize) < V));
    }

    #[test]
    fn partial_boundaries_are_bit_identical(retain in docs(5), forget in docs(5), seed in any::<u64>(), random in any::<bool>()) {
        let config = ExperimentConfig { vocab_size: V, ..ExperimentConfig::default() };
        let (r, f) = (corpus(0, 0, retain), corpus(1, 0, forget));
        let mode = if random { CalibrationMode::Random } else { CalibrationMode::Sequential };
        let mut rng = derive_rng(seed, &[]);
        let zero = partial_retrain(&r, &f, 0.0, mode, &mut rng, &config).unwrap().model;
        let one = partial_retrain(&r, &f, 1.0, mode, &mut rng, &config).unwrap().model;
        prop_assert_eq!(model_bytes(&zero), model_bytes(&retrain(&r, &config).unwrap().model));
        let full = train(&r.union(&f).unwrap(), config.ngram_order, config.smoothing_alpha, 1.0).unwrap().with_role("original");
        prop_assert_eq!(model_bytes(&one), model_bytes(&full));
    }

    #[test]
    fn split_is_a_partition(n in 2usize..30, picks in prop::collection::btree_set(0usize..30, 1..10), mode_ix in 0usize..3) {
        let forget: BTreeSet<usize> = picks.into_iter().filter(|&o| o < n).collect();
        prop_assume!(!forget.is_empty() && forget.len() < n);
        let mode = DuplicateMode::ALL[mode_ix];
        let spec = SplitSpec::new(n, forget, mode).unwrap();
        prop_assert!(spec.forget_owner_ids.is_disjoint(&spec.retain_owner_ids));
        prop_assert_eq!(spec.forget_owner_ids.len() + spec.retain_owner_ids.len(), n);
        prop_assert_eq!(spec.duplicate_assignment.is_empty(), mode == DuplicateMode::None);
        for (f, h) in &spec.duplicate_assignment {
            prop_assert!(spec.forget_owner_ids.contains(f) && spec.retain_owner_ids.contains(h));
        }
    }

    #[test]
    fn z_is_raw_mean_times_root_n(tokens in prop::collection::vec(0u32..512, 0..300), prev in 0u32..512, mu in any::<u64>()) {
        let s = verify(&tokens, prev, &WatermarkKey::with_mu(mu));
        prop_assert_eq!(s.n_tokens, tokens.len());
        prop_assert_eq!(s.z, s.raw_mean * (s.n_tokens as f64).sqrt());
    }

    #[test]
    fn fidelity_is_a_bounded_symmetric_distance(a in docs(5), b in docs(5)) {
        let (ca, cb) = (corpus(0, 0, a), corpus(1, 0, b));
        let d = fidelity_tv(&ca, &cb).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - fidelity_tv(&cb, &ca).unwrap()).abs() < 1e-12);
        prop_assert_eq!(fidelity_tv(&ca, &ca).unwrap(), 0.0);
    }

    #[test]
    fn decoy_interception_grows_as_threshold_falls(
        obs in prop::collection::vec((0.0f64..1.0, 0.01f64..1.0, -0.2f64..0.2), 1..80),
        points in 2usize..20,
    ) {
        let obs: Vec<DecoyObservation> = obs.into_iter().map(|(similarity, raw_value, replaced_value)| DecoyObservation { similarity, raw_value, replaced_value }).collect();
        let sims: Vec<f64> = obs.iter().map(|o| o.similarity).collect();
        let curve = decoy_curve(&obs, &threshold_grid(&sims, points)).unwrap();
        prop_assert_eq!(curve[0].intercept_fraction, 0.0);
        prop_assert!((curve[0].normalized_aggregate - 1.0).abs() < 1e-12);
        prop_assert_eq!(curve.last().unwrap().intercept_fraction, 1.0);
        for w in curve.windows(2) {
            prop_assert!(w[0].threshold_b >= w[1].threshold_b);
            prop_assert!(w[0].intercept_fraction <= w[1].intercept_fraction);
        }
    }
}
