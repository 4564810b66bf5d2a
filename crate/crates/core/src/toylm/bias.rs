use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::prf::{prf64, to_unit};
use crate::types::{TokenId, WatermarkKey, BOS};
use crate::watermark::logit_bias;

/// One additive per-transition logit perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Bias {
    /// Keyed sinusoidal perturbation over the permuted vocabulary.
    Waterfall { key: WatermarkKey },
    /// Green-list shift: `delta` on the `gamma` share of tokens selected
    /// by the keyed hash of `(t_prev, t)`.
    Kgw { delta: f64, gamma: f64, seed_key: u64 },
}

impl Bias {
    /// True when the bias is zero for every transition.
    pub fn is_zero(&self) -> bool {
        match self {
            Bias::Waterfall { key } => key.kappa_w == 0.0,
            Bias::Kgw { delta, .. } => *delta == 0.0,
        }
    }

    #[inline]
    pub fn value(&self, t_prev: TokenId, t: TokenId) -> f64 {
        match self {
            Bias::Waterfall { key } => logit_bias(key, t_prev, t),
            Bias::Kgw { delta, gamma, seed_key } => {
                if to_unit(prf64(*seed_key, t_prev as u64, t as u64)) < *gamma {
                    *delta
                } else {
                    0.0
                }
            }
        }
    }
}

/// Ordered list of biases applied together during generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec(pub Vec<Bias>);

impl BiasSpec {
    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn single(bias: Bias) -> Self {
        Self(vec![bias])
    }

    pub fn with(mut self, bias: Bias) -> Self {
        self.0.push(bias);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn total(&self, t_prev: TokenId, t: TokenId) -> f64 {
        self.0.iter().map(|b| b.value(t_prev, t)).sum()
    }
}

/// Per-predecessor rows of `exp(total bias)`, built on first use.
///
/// BOS gets weight zero so it is never generated.
pub struct BiasTable {
    spec: BiasSpec,
    vocab_size: usize,
    rows: Vec<OnceLock<ExpRow>>,
}

pub(crate) struct ExpRow {
    pub(crate) weights: Vec<f64>,
    pub(crate) cum: Vec<f64>,
}

impl ExpRow {
    pub(crate) fn total(&self) -> f64 {
        *self.cum.last().expect("vocab has real tokens")
    }
}

impl BiasTable {
    pub fn new(spec: BiasSpec, vocab_size: usize) -> Self {
        Self { spec, vocab_size, rows: (0..vocab_size).map(|_| OnceLock::new()).collect() }
    }

    pub fn spec(&self) -> &BiasSpec {
        &self.spec
    }

    pub(crate) fn row(&self, t_prev: TokenId) -> &ExpRow {
        self.rows[t_prev as usize].get_or_init(|| {
            let mut weights = vec![0.0; self.vocab_size];
            let mut cum = vec![0.0; self.vocab_size];
            let mut acc = 0.0;
            for t in 1..self.vocab_size {
                let w = self.spec.total(t_prev, t as TokenId).exp();
                weights[t] = w;
                acc += w;
                cum[t] = acc;
            }
            debug_assert_eq!(weights[BOS as usize], 0.0);
            ExpRow { weights, cum }
        })
    }
}
