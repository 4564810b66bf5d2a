//! Count-space unlearning algorithms and partially retrained references.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::prf::Rng;
use crate::toylm::{train, NGramModel};
use crate::types::{CalibrationMode, Corpus, Document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Retrain,
    Partial,
    Gd,
    Tv,
    Decay,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Retrain => "retrain",
            Algorithm::Partial => "partial",
            Algorithm::Gd => "gd",
            Algorithm::Tv => "tv",
            Algorithm::Decay => "decay",
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnlearnResult {
    pub model: NGramModel,
    pub algorithm: Algorithm,
    pub parameters: BTreeMap<String, f64>,
}

impl UnlearnResult {
    fn new(model: NGramModel, algorithm: Algorithm, parameters: &[(&str, f64)]) -> Self {
        let parameters = parameters.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        Self { model, algorithm, parameters }
    }
}

fn role(algorithm: Algorithm, params: &[(&str, f64)]) -> String {
    let body: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("unlearned:{}({})", algorithm.as_str(), body.join(","))
}

/// Trains on the retain corpus alone.
pub fn retrain(retain: &Corpus, config: &ExperimentConfig) -> Result<UnlearnResult> {
    if retain.is_empty() {
        return Err(Error::Empty("retain corpus"));
    }
    let model = train(retain, config.ngram_order, config.smoothing_alpha, 1.0)?.with_role("retrained");
    Ok(UnlearnResult::new(model, Algorithm::Retrain, &[]))
}

/// Indices of the forget documents kept for a given fraction.
pub fn partial_selection(n_forget: usize, fraction: f64, mode: CalibrationMode, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid(format!("fraction {fraction} outside [0, 1]")));
    }
    let k = ((fraction * n_forget as f64) + 1e-9).floor() as usize;
    let k = k.min(n_forget);
    Ok(match mode {
        CalibrationMode::Sequential => (0..k).collect(),
        CalibrationMode::Random => {
            let mut picked = index::sample(rng, n_forget, k).into_vec();
            picked.sort_unstable();
            picked
        }
    })
}

/// Trains on retain plus a `fraction` of the forget documents.
///
/// Fraction 0 reproduces [`retrain`] and fraction 1 reproduces training on
/// retain and forget together, including the role label.
pub fn partial_retrain(
    retain: &Corpus,
    forget: &Corpus,
    fraction: f64,
    mode: CalibrationMode,
    trial_rng: &mut Rng,
    config: &ExperimentConfig,
) -> Result<UnlearnResult> {
    let base = retrain(retain, config)?.model;
    partial_retrain_from(&base, forget, fraction, mode, trial_rng)
}

/// [`partial_retrain`] reusing an already trained retain model.
///
/// Counts are integer multiples of one, so adding the subset's counts to the
/// retain model is bit-identical to recounting the union.
pub fn partial_retrain_from(
    retain_model: &NGramModel,
    forget: &Corpus,
    fraction: f64,
    mode: CalibrationMode,
    trial_rng: &mut Rng,
) -> Result<UnlearnResult> {
    let picked = partial_selection(forget.len(), fraction, mode, trial_rng)?;
    let k = picked.len();
    let params = [("k", k as f64), ("fraction", fraction)];
    let model = if k == 0 {
        retain_model.clone().with_role("retrained")
    } else {
        let subset: Vec<Document> = picked.iter().map(|&i| forget.docs[i].clone()).collect();
        let sub = crate::toylm::train_docs(&subset, retain_model.vocab_size(), retain_model.order(), retain_model.alpha(), 1.0)?;
        let merged = NGramModel::merge(retain_model, &sub, 1.0, 1.0)?;
        merged.with_role(if k == forget.len() { "original".to_string() } else { format!("partial:{k}") })
    };
    Ok(UnlearnResult::new(model, Algorithm::Partial, &params))
}

/// Amplifies retain influence: `original + extra_weight * train(retain)`.
pub fn gd_analog(original: &NGramModel, retain: &Corpus, extra_weight: f64) -> Result<UnlearnResult> {
    if !(extra_weight > 0.0 && extra_weight.is_finite()) {
        return Err(invalid("extra_weight must be positive"));
    }
    let r = train(retain, original.order(), original.alpha(), 1.0)?;
    let params = [("weight", extra_weight)];
    let model = NGramModel::merge(original, &r, 1.0, extra_weight)?.with_role(role(Algorithm::Gd, &params));
    Ok(UnlearnResult::new(model, Algorithm::Gd, &params))
}

/// Task-vector negation: `theta - lambda * (theta_reinforced - theta)`.
pub fn tv_analog(original: &NGramModel, forget: &Corpus, lambda: f64, reinforce_weight: f64) -> Result<UnlearnResult> {
    if !(lambda >= 0.0 && reinforce_weight >= 0.0 && lambda.is_finite() && reinforce_weight.is_finite()) {
        return Err(invalid("lambda and reinforce_weight must be finite and >= 0"));
    }
    let params = [("lambda", lambda), ("reinforce_weight", reinforce_weight)];
    let f = train(forget, original.order(), original.alpha(), 1.0)?;
    let reinforced = NGramModel::merge(original, &f, 1.0, reinforce_weight)?;
    let vector = NGramModel::merge(&reinforced, original, 1.0, -1.0)?;
    let model = NGramModel::merge(original, &vector, 1.0, -lambda)?.with_role(role(Algorithm::Tv, &params));
    Ok(UnlearnResult::new(model, Algorithm::Tv, &params))
}

/// Removes `(1 - gamma)` of each transition's forget-attributed count.
pub fn decay_analog(original: &NGramModel, forget: &Corpus, gamma: f64) -> Result<UnlearnResult> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma {gamma} outside [0, 1]")));
    }
    let params = [("gamma", gamma)];
    let f = train(forget, original.order(), original.alpha(), 1.0)?;
    let model = original
        .map_counts(|ctx, t, c| c - (1.0 - gamma) * c.min(f.count(ctx, t)))
        .with_role(role(Algorithm::Decay, &params));
    Ok(UnlearnResult::new(model, Algorithm::Decay, &params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prf::derive_rng;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig { vocab_size: 16, ..ExperimentConfig::default() }
    }

    fn corpora() -> (Corpus, Corpus) {
        let retain = Corpus::new(16, vec![
            Document::new(0, 0, vec![1, 2, 3, 4]),
            Document::new(0, 1, vec![2, 3, 5]),
        ])
        .unwrap();
        let forget = Corpus::new(16, (0..10).map(|i| Document::new(1, i, vec![7, 8, 9, (i % 5 + 10) as u32])).collect()).unwrap();
        (retain, forget)
    }

    fn json(m: &NGramModel) -> String {
        serde_json::to_string(&m.to_json()).unwrap()
    }

    #[test]
    fn retrain_is_train_on_retain() {
        let (retain, forget) = corpora();
        let r = retrain(&retain, &cfg()).unwrap();
        assert_eq!(r.model.rows().count(), train(&retain, 2, 0.1, 1.0).unwrap().rows().count());
        for (ctx, row) in r.model.rows() {
            for (t, _) in row.iter() {
                assert!(forget.docs.iter().all(|d| !d.tokens.windows(2).any(|w| w == [ctx[0], t]))
                    || retain.docs.iter().any(|d| d.tokens.windows(2).any(|w| w == [ctx[0], t])));
            }
        }
        assert!(retrain(&Corpus::new(16, vec![]).unwrap(), &cfg()).is_err());
    }

    #[test]
    fn partial_boundaries_are_bit_identical() {
        let (retain, forget) = corpora();
        let mut rng = derive_rng(1, &[]);
        for mode in [CalibrationMode::Sequential, CalibrationMode::Random] {
            let zero = partial_retrain(&retain, &forget, 0.0, mode, &mut rng, &cfg()).unwrap();
            assert_eq!(json(&zero.model), json(&retrain(&retain, &cfg()).unwrap().model));
            let one = partial_retrain(&retain, &forget, 1.0, mode, &mut rng, &cfg()).unwrap();
            let full = train(&retain.union(&forget).unwrap(), 2, 0.1, 1.0).unwrap();
            assert_eq!(json(&one.model), json(&full));
        }
    }

    #[test]
    fn sequential_takes_a_prefix() {
        let mut rng = derive_rng(2, &[]);
        assert_eq!(partial_selection(10, 0.5, CalibrationMode::Sequential, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        // 0.3 * 10 is 2.9999999999999996 in floating point; still three docs.
        assert_eq!(partial_selection(10, 0.3, CalibrationMode::Sequential, &mut rng).unwrap().len(), 3);
        let r = partial_selection(10, 0.7, CalibrationMode::Random, &mut rng).unwrap();
        assert_eq!(r.len(), 7);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert!(partial_selection(10, 1.5, CalibrationMode::Random, &mut rng).is_err());
    }

    #[test]
    fn partial_recount_oracle() {
        let (retain, forget) = corpora();
        let mut rng = derive_rng(3, &[]);
        let p = partial_retrain(&retain, &forget, 0.4, CalibrationMode::Sequential, &mut rng, &cfg()).unwrap();
        let union = retain.union(&forget.subset(forget.docs.iter().take(4))).unwrap();
        let oracle = train(&union, 2, 0.1, 1.0).unwrap();
        for (ctx, row) in oracle.rows() {
            for (t, c) in row.iter() {
                assert_eq!(p.model.count(ctx, t), c);
            }
        }
        assert_eq!(p.model.rows().count(), oracle.rows().count());
        assert_eq!(p.parameters["k"], 4.0);
    }

    #[test]
    fn gd_small_weight_tends_to_original() {
        let (retain, forget) = corpora();
        let original = train(&retain.union(&forget).unwrap(), 2, 0.1, 1.0).unwrap();
        let g = gd_analog(&original, &retain, 1e-12).unwrap();
        for (ctx, row) in original.rows() {
            for (t, c) in row.iter() {
                assert!((g.model.count(ctx, t) - c).abs() < 1e-9);
            }
        }
        assert!(gd_analog(&original, &retain, 0.0).is_err());
    }

    #[test]
    fn tv_identity_and_recount() {
        let retain = Corpus::new(16, vec![Document::new(0, 0, vec![1, 2, 1, 2])]).unwrap();
        let forget = Corpus::new(16, vec![Document::new(1, 0, vec![1, 2, 3]), Document::new(1, 1, vec![3, 3])]).unwrap();
        let original = train(&retain.union(&forget).unwrap(), 2, 0.1, 1.0).unwrap();
        let same = tv_analog(&original, &forget, 0.0, 1.0).unwrap();
        assert_eq!(serde_json::to_string(&same.model.to_json()["counts"]).unwrap(),
            serde_json::to_string(&original.to_json()["counts"]).unwrap());
        let t = tv_analog(&original, &forget, 1.0, 1.0).unwrap();
        let f = train(&forget, 2, 0.1, 1.0).unwrap();
        for ctx in 0..16u32 {
            for tok in 0..16u32 {
                let want = (original.count(&[ctx], tok) - f.count(&[ctx], tok)).max(0.0);
                assert_eq!(t.model.count(&[ctx], tok), want);
            }
        }
        // Retain-only transitions survive.
        assert_eq!(t.model.count(&[2], 1), 1.0);
    }

    #[test]
    fn decay_limits() {
        let (retain, forget) = corpora();
        let original = train(&retain.union(&forget).unwrap(), 2, 0.1, 1.0).unwrap();
        let keep = decay_analog(&original, &forget, 1.0).unwrap();
        assert_eq!(serde_json::to_string(&keep.model.to_json()["counts"]).unwrap(),
            serde_json::to_string(&original.to_json()["counts"]).unwrap());
        let only_forget = train(&forget, 2, 0.1, 1.0).unwrap();
        assert!(decay_analog(&only_forget, &forget, 0.0).unwrap().model.is_zero());
        assert!(decay_analog(&original, &forget, 1.5).is_err());
    }
}
