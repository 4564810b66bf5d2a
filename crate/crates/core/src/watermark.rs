//! Perturbation basis, embedding bias, verification scoring and fidelity.
//!
//! A key permutes the vocabulary per preceding token (via [`unit_position`]);
//! the perturbation is a unit-variance sinusoid over the permuted positions.
//! Embedding adds `kappa_w` times the basis value to the logits, and
//! verification averages the basis value over the observed transitions.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::types::{unit_position, Corpus, TokenId, WatermarkKey, BOS};

/// `sqrt(2) * sin(2 pi k_p u)`: zero mean and unit variance for uniform `u`,
/// orthogonal across distinct `k_p`.
pub fn basis_value(k_p: u32, u: f64) -> Result<f64> {
    if k_p < 1 {
        return Err(invalid("perturbation key k_p must be >= 1"));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(invalid(format!("position {u} outside [0, 1)")));
    }
    Ok(basis(k_p, u))
}

#[inline]
pub(crate) fn basis(k_p: u32, u: f64) -> f64 {
    SQRT_2 * (TAU * k_p as f64 * u).sin()
}

/// Per-transition basis value under `key`.
#[inline]
pub fn transition_signal(key: &WatermarkKey, t_prev: TokenId, t: TokenId) -> f64 {
    basis(key.k_p, unit_position(key, t_prev, t))
}

/// Additive logit perturbation for generating `t` after `t_prev`.
#[inline]
pub fn logit_bias(key: &WatermarkKey, t_prev: TokenId, t: TokenId) -> f64 {
    if key.kappa_w == 0.0 {
        return 0.0;
    }
    key.kappa_w * transition_signal(key, t_prev, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationScore {
    /// Mean basis value per scored transition.
    pub raw_mean: f64,
    /// `raw_mean * sqrt(n_tokens)`; standard normal under the null.
    pub z: f64,
    pub n_tokens: usize,
}

impl VerificationScore {
    pub const ZERO: VerificationScore = VerificationScore { raw_mean: 0.0, z: 0.0, n_tokens: 0 };

    pub fn from_sum(sum: f64, n_tokens: usize) -> Self {
        if n_tokens == 0 {
            return Self::ZERO;
        }
        let raw_mean = sum / n_tokens as f64;
        Self { raw_mean, z: raw_mean * (n_tokens as f64).sqrt(), n_tokens }
    }
}

/// Scores `tokens` for the watermark of `key`. `prev0` is the token that
/// precedes `tokens[0]` (BOS, or the last prompt token for completions).
pub fn verify(tokens: &[TokenId], prev0: TokenId, key: &WatermarkKey) -> VerificationScore {
    VerificationScore::from_sum(signal_sum(tokens, prev0, key), tokens.len())
}

pub(crate) fn signal_sum(tokens: &[TokenId], prev0: TokenId, key: &WatermarkKey) -> f64 {
    let mut prev = prev0;
    let mut sum = 0.0;
    for &t in tokens {
        sum += transition_signal(key, prev, t);
        prev = t;
    }
    sum
}

/// Scores a whole document, conditioning its first token on BOS.
pub fn verify_document(tokens: &[TokenId], key: &WatermarkKey) -> VerificationScore {
    verify(tokens, BOS, key)
}

/// Count-weighted mean total-variation distance between the empirical
/// next-token conditionals of two corpora (contexts = previous token).
///
/// A context seen in only one corpus contributes distance 1.
pub fn fidelity_tv(a: &Corpus, b: &Corpus) -> Result<f64> {
    if a.vocab_size != b.vocab_size {
        return Err(Error::ShapeMismatch(format!(
            "vocab {} vs {}",
            a.vocab_size, b.vocab_size
        )));
    }
    if a.n_tokens() == 0 || b.n_tokens() == 0 {
        return Err(Error::Empty("fidelity_tv needs two non-empty corpora"));
    }
    let (ta, ra) = bigram_table(a);
    let (tb, rb) = bigram_table(b);
    let mut contexts: BTreeMap<TokenId, ()> = BTreeMap::new();
    contexts.extend(ra.keys().map(|&c| (c, ())));
    contexts.extend(rb.keys().map(|&c| (c, ())));

    let mut cells: Vec<(TokenId, TokenId)> = ta.keys().chain(tb.keys()).copied().collect();
    cells.sort_unstable();
    cells.dedup();

    let mut tv_by_ctx: BTreeMap<TokenId, f64> = BTreeMap::new();
    for (ctx, t) in cells {
        let (na, nb) = (ra.get(&ctx).copied().unwrap_or(0), rb.get(&ctx).copied().unwrap_or(0));
        if na == 0 || nb == 0 {
            continue;
        }
        let pa = ta.get(&(ctx, t)).copied().unwrap_or(0) as f64 / na as f64;
        let pb = tb.get(&(ctx, t)).copied().unwrap_or(0) as f64 / nb as f64;
        *tv_by_ctx.entry(ctx).or_default() += 0.5 * (pa - pb).abs();
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &ctx in contexts.keys() {
        let (na, nb) = (ra.get(&ctx).copied().unwrap_or(0), rb.get(&ctx).copied().unwrap_or(0));
        let w = (na + nb) as f64;
        let tv = if na == 0 || nb == 0 { 1.0 } else { tv_by_ctx.get(&ctx).copied().unwrap_or(0.0) };
        num += w * tv;
        den += w;
    }
    Ok((num / den).clamp(0.0, 1.0))
}

fn bigram_table(c: &Corpus) -> (HashMap<(TokenId, TokenId), u64>, HashMap<TokenId, u64>) {
    let mut cells = HashMap::new();
    let mut rows = HashMap::new();
    for d in &c.docs {
        let mut prev = BOS;
        for &t in &d.tokens {
            *cells.entry((prev, t)).or_insert(0) += 1;
            *rows.entry(prev).or_insert(0) += 1;
            prev = t;
        }
    }
    (cells, rows)
}
