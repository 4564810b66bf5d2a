//! Adversarial model owners: query interception and watermark dilution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prf::Rng;
use crate::toylm::{Bias, NGramModel, Generator};
use crate::types::{OwnerId, TokenId, WatermarkKey};

/// Sparse unigram count vector with its Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Unigram {
    counts: Vec<(TokenId, f64)>,
    norm: f64,
}

impl Unigram {
    pub fn new(tokens: &[TokenId]) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("similarity input"));
        }
        let mut sorted = tokens.to_vec();
        sorted.sort_unstable();
        let mut counts: Vec<(TokenId, f64)> = Vec::new();
        for t in sorted {
            match counts.last_mut() {
                Some((last, c)) if *last == t => *c += 1.0,
                _ => counts.push((t, 1.0)),
            }
        }
        let norm = counts.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
        Ok(Self { counts, norm })
    }

    pub fn cosine(&self, other: &Unigram) -> f64 {
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < self.counts.len() && j < other.counts.len() {
            let (a, ca) = self.counts[i];
            let (b, cb) = other.counts[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += ca * cb;
                    i += 1;
                    j += 1;
                }
            }
        }
        (dot / (self.norm * other.norm)).clamp(0.0, 1.0)
    }
}

/// Cosine similarity of unigram count vectors.
pub fn ss_cosine(a: &[TokenId], b: &[TokenId]) -> Result<f64> {
    Ok(Unigram::new(a)?.cosine(&Unigram::new(b)?))
}

/// Largest similarity between `tokens` and any reference profile.
pub fn max_similarity(tokens: &[TokenId], reference: &[Unigram]) -> Result<f64> {
    let u = Unigram::new(tokens)?;
    Ok(reference.iter().map(|r| u.cosine(r)).fold(0.0, f64::max))
}

/// Interception policy of a decoy model owner.
///
/// `threshold_b = +inf` never intercepts; any `B < 0` always does.
pub struct DecoyParams<'a> {
    pub threshold_b: f64,
    pub replacement_model: &'a NGramModel,
    pub forget_reference: &'a [Unigram],
}

/// Passes `raw_output` through unless it resembles the forget reference
/// more than `B`, in which case a same-length text from the replacement
/// model is returned instead.
pub fn decoy_output(raw_output: &[TokenId], prompt: &[TokenId], params: &DecoyParams<'_>, rng: &mut Rng) -> (Vec<TokenId>, bool) {
    if params.threshold_b.is_nan() || params.threshold_b == f64::INFINITY {
        return (raw_output.to_vec(), false);
    }
    let sim = if raw_output.is_empty() {
        0.0
    } else {
        max_similarity(raw_output, params.forget_reference).expect("non-empty output")
    };
    if sim > params.threshold_b {
        (Generator::unbiased(params.replacement_model).generate(prompt, raw_output.len(), rng), true)
    } else {
        (raw_output.to_vec(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackCurvePoint {
    pub threshold_b: f64,
    pub intercept_fraction: f64,
    pub normalized_aggregate: f64,
}

/// One query output as seen by the decoy: its similarity score and the
/// metric value with and without replacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservation {
    pub similarity: f64,
    pub raw_value: f64,
    pub replaced_value: f64,
}

/// Curve of normalized aggregate against interception rate over a grid of
/// thresholds, sorted by decreasing `B`.
///
/// The replacement for each output is drawn once and reused at every `B`,
/// so the intercepted set only grows as `B` falls. The aggregate is
/// normalized by the never-intercepting aggregate.
pub fn decoy_curve(observations: &[DecoyObservation], grid: &[f64]) -> Result<Vec<AttackCurvePoint>> {
    if observations.is_empty() {
        return Err(Error::Empty("decoy observations"));
    }
    if grid.iter().any(|b| b.is_nan()) {
        return Err(invalid("threshold grid contains NaN"));
    }
    let n = observations.len() as f64;
    let baseline = observations.iter().map(|o| o.raw_value).sum::<f64>() / n;
    if baseline == 0.0 {
        return Err(Error::ZeroBaseline("decoy raw aggregate".into()));
    }
    let mut bs = grid.to_vec();
    bs.sort_by(|a, b| b.total_cmp(a));
    Ok(bs
        .into_iter()
        .map(|b| {
            let mut hits = 0usize;
            let mut sum = 0.0;
            for o in observations {
                if o.similarity > b {
                    hits += 1;
                    sum += o.replaced_value;
                } else {
                    sum += o.raw_value;
                }
            }
            AttackCurvePoint { threshold_b: b, intercept_fraction: hits as f64 / n, normalized_aggregate: sum / n / baseline }
        })
        .collect())
}

/// Thresholds at evenly spaced similarity quantiles, plus the two extremes.
///
/// `1.0` never intercepts because cosine similarity never exceeds one;
/// `-1.0` always does.
pub fn threshold_grid(similarities: &[f64], points: usize) -> Vec<f64> {
    let mut grid = vec![1.0, -1.0];
    if points > 2 && !similarities.is_empty() {
        for i in 1..points - 1 {
            grid.push(crate::stats::quantile(similarities, i as f64 / (points - 1) as f64));
        }
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    grid
}

/// Largest deviation of a curve from `y = 1 - x`.
pub fn linearity_deviation(curve: &[AttackCurvePoint]) -> f64 {
    curve.iter().map(|p| (p.normalized_aggregate - (1.0 - p.intercept_fraction)).abs()).fold(0.0, f64::max)
}

/// Waterfall bias under an adversary key that no owner uses.
pub fn dilution_bias_waterfall(adversary_key: WatermarkKey, owner_keys: &BTreeMap<OwnerId, WatermarkKey>) -> Result<Bias> {
    if let Some((&owner, _)) = owner_keys.iter().find(|(_, k)| k.mu == adversary_key.mu) {
        return Err(invalid(format!("adversary key collides with owner {owner}")));
    }
    Ok(Bias::Waterfall { key: adversary_key })
}

/// Green-list bias: `delta` on the keyed `gamma` share of transitions.
pub fn kgw_bias(delta: f64, gamma: f64, seed_key: u64) -> Result<Bias> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("kgw gamma {gamma} outside (0, 1)")));
    }
    if !delta.is_finite() {
        return Err(invalid("kgw delta must be finite"));
    }
    Ok(Bias::Kgw { delta, gamma, seed_key })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prf::derive_rng;
    use crate::stats::{mean, pearson};
    use crate::toylm::BiasSpec;
    use crate::watermark::verify;
    use rand::Rng as _;

    #[test]
    fn cosine_examples() {
        assert!((ss_cosine(&[1, 2, 3], &[1, 2, 3]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ss_cosine(&[1, 2], &[3, 4]).unwrap(), 0.0);
        // a = {1: 2, 2: 1}, b = {1: 1, 2: 2}: dot 4 over sqrt(5) * sqrt(5).
        assert!((ss_cosine(&[1, 1, 2], &[1, 2, 2]).unwrap() - 0.8).abs() < 1e-12);
        assert!(ss_cosine(&[], &[1]).is_err());
    }

    #[test]
    fn decoy_extremes() {
        let m = NGramModel::empty(2, 64, 0.1).unwrap();
        let refs = vec![Unigram::new(&[1, 2, 3]).unwrap()];
        let raw = vec![5, 6, 7, 8];
        let mut rng = derive_rng(1, &[]);
        let never = DecoyParams { threshold_b: f64::INFINITY, replacement_model: &m, forget_reference: &refs };
        assert_eq!(decoy_output(&raw, &[1], &never, &mut rng), (raw.clone(), false));
        let always = DecoyParams { threshold_b: -1.0, ..never };
        let (out, hit) = decoy_output(&raw, &[1], &always, &mut rng);
        assert!(hit);
        assert_eq!(out.len(), raw.len());
    }

    #[test]
    fn replacements_follow_the_null() {
        let m = NGramModel::empty(2, 512, 0.1).unwrap();
        let refs = vec![Unigram::new(&[1, 2, 3]).unwrap()];
        let p = DecoyParams { threshold_b: -1.0, replacement_model: &m, forget_reference: &refs };
        let key = WatermarkKey::with_mu(0xABCD);
        let mut rng = derive_rng(2, &[]);
        let raw = vec![9u32; 256];
        let zs: Vec<f64> = (0..500)
            .map(|_| {
                let prompt = [rng.random_range(1..512)];
                let (out, _) = decoy_output(&raw, &prompt, &p, &mut rng);
                verify(&out, prompt[0], &key).z
            })
            .collect();
        assert!(mean(&zs).abs() < 0.15, "{}", mean(&zs));
    }

    #[test]
    fn curve_is_monotone_with_exact_endpoints() {
        let mut rng = derive_rng(3, &[]);
        let obs: Vec<DecoyObservation> = (0..300)
            .map(|_| DecoyObservation { similarity: rng.random(), raw_value: 0.5 + rng.random::<f64>() * 0.1, replaced_value: 0.0 })
            .collect();
        let sims: Vec<f64> = obs.iter().map(|o| o.similarity).collect();
        let curve = decoy_curve(&obs, &threshold_grid(&sims, 11)).unwrap();
        assert_eq!(curve[0].intercept_fraction, 0.0);
        assert_eq!(curve[0].normalized_aggregate, 1.0);
        let last = curve.last().unwrap();
        assert_eq!(last.intercept_fraction, 1.0);
        assert_eq!(last.normalized_aggregate, 0.0);
        assert!(curve.windows(2).all(|w| w[0].intercept_fraction <= w[1].intercept_fraction));
        assert!(linearity_deviation(&curve) < 0.05);
    }

    #[test]
    fn kgw_green_fraction() {
        let b = kgw_bias(1.0, 0.5, 99).unwrap();
        let v = 512u32;
        let green = (0..v).flat_map(|a| (0..v).map(move |t| (a, t))).filter(|&(a, t)| b.value(a, t) > 0.0).count();
        let frac = green as f64 / (v * v) as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
        assert!(kgw_bias(2.0, 1.0, 1).is_err());
        assert!(kgw_bias(2.0, 0.0, 1).is_err());
        assert_eq!(kgw_bias(0.0, 0.5, 1).unwrap().value(3, 4), 0.0);
    }

    #[test]
    fn dilution_rejects_owner_key() {
        let owners: BTreeMap<OwnerId, WatermarkKey> = [(0, WatermarkKey::with_mu(5))].into();
        assert!(dilution_bias_waterfall(WatermarkKey::with_mu(5), &owners).is_err());
        assert!(dilution_bias_waterfall(WatermarkKey::with_mu(6), &owners).is_ok());
    }

    #[test]
    fn dilution_keys_are_orthogonal() {
        let m = NGramModel::empty(2, 512, 0.1).unwrap();
        let owner = WatermarkKey::with_mu(11);
        let adv = WatermarkKey::with_mu(12);
        let g = Generator::new(&m, BiasSpec::single(Bias::Waterfall { key: owner }).with(Bias::Waterfall { key: adv }));
        let mut rng = derive_rng(4, &[]);
        let (mut zo, mut za) = (Vec::new(), Vec::new());
        for _ in 0..500 {
            let out = g.generate(&[7], 128, &mut rng);
            zo.push(verify(&out, 7, &owner).z);
            za.push(verify(&out, 7, &adv).z);
        }
        assert!(mean(&za) > 5.0);
        assert!(mean(&zo) > 5.0);
        assert!(pearson(&zo, &za).abs() < 0.1, "{}", pearson(&zo, &za));
    }
}
