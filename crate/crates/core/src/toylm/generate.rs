use rand::Rng as _;

use super::bias::{BiasSpec, BiasTable, ExpRow};
use super::model::{NGramModel, Row};
use crate::prf::Rng;
use crate::types::{TokenId, BOS};

/// Autoregressive sampler over a model with optional logit biases.
///
/// Each step samples from `softmax(logprob(. | ctx) + bias(t_prev, .))`
/// restricted to real tokens (BOS excluded), at temperature 1 with no
/// truncation. Sampling is exact: the smoothed distribution is split into
/// its count part and its uniform `alpha` part.
pub struct Generator<'m> {
    model: &'m NGramModel,
    table: Option<BiasTable>,
}

impl<'m> Generator<'m> {
    /// Zero biases are dropped, so a zero-strength spec samples exactly
    /// like [`Generator::unbiased`] under the same rng.
    pub fn new(model: &'m NGramModel, mut biases: BiasSpec) -> Self {
        biases.0.retain(|b| !b.is_zero());
        let table = (!biases.is_empty()).then(|| BiasTable::new(biases, model.vocab_size()));
        Self { model, table }
    }

    pub fn unbiased(model: &'m NGramModel) -> Self {
        Self::new(model, BiasSpec::none())
    }

    pub fn model(&self) -> &NGramModel {
        self.model
    }

    /// Samples `max_len` tokens after `prompt`; returns the completion only.
    pub fn generate(&self, prompt: &[TokenId], max_len: usize, rng: &mut Rng) -> Vec<TokenId> {
        let n = self.model.context_len();
        let mut history: Vec<TokenId> = Vec::with_capacity(n + prompt.len() + max_len);
        history.resize(n, BOS);
        history.extend_from_slice(prompt);
        let start = history.len();
        for _ in 0..max_len {
            let t = self.step(&history, rng);
            history.push(t);
        }
        history.split_off(start)
    }

    /// One draw given a BOS-padded history of at least `order - 1` tokens.
    fn step(&self, history: &[TokenId], rng: &mut Rng) -> TokenId {
        let ctx = &history[history.len() - self.model.context_len()..];
        let row = self.model.row(ctx);
        match &self.table {
            None => sample_plain(self.model, row, rng),
            Some(table) => sample_biased(self.model, row, table.row(*history.last().unwrap()), rng),
        }
    }

    /// Exact next-token distribution after `history` (index = token id),
    /// computed from `logprob` and the bias functions directly.
    pub fn distribution(&self, history: &[TokenId]) -> Vec<f64> {
        let mut pad = Vec::new();
        let ctx = self.model.context_of(history, &mut pad).to_vec();
        let t_prev = history.last().copied().unwrap_or(BOS);
        let v = self.model.vocab_size();
        let logits: Vec<f64> = (0..v)
            .map(|t| {
                if t == BOS as usize {
                    f64::NEG_INFINITY
                } else {
                    let b = self.table.as_ref().map_or(0.0, |tb| tb.spec().total(t_prev, t as TokenId));
                    self.model.logprob(t as TokenId, &ctx) + b
                }
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Rewrites `source` token by token, keeping the generated text as
    /// context.
    ///
    /// Each position first proposes a candidate: a fresh unbiased draw with
    /// probability `rewrite_prob`, otherwise the source token. With biases
    /// present the candidate then passes through a maximal coupling to the
    /// biased distribution: it is kept with probability
    /// `min(1, q(cand) / p(cand))`, else replaced by a draw from the excess
    /// `(q - p)+`. When the candidate is distributed as `p`, the output is
    /// distributed exactly as the biased `q`, and with zero bias nothing
    /// changes.
    pub fn paraphrase(&self, source: &[TokenId], rewrite_prob: f64, rng: &mut Rng) -> Vec<TokenId> {
        let n = self.model.context_len();
        let mut history: Vec<TokenId> = Vec::with_capacity(n + source.len());
        history.resize(n, BOS);
        for &orig in source {
            let ctx = &history[history.len() - n..];
            let row = self.model.row(ctx);
            let candidate = if rewrite_prob > 0.0 && rng.random::<f64>() < rewrite_prob {
                sample_plain(self.model, row, rng)
            } else {
                orig
            };
            let out = match &self.table {
                None => candidate,
                Some(table) => couple(self.model, row, table.row(*history.last().unwrap()), candidate, rng),
            };
            history.push(out);
        }
        history.split_off(n)
    }
}

/// Convenience wrapper building a one-off [`Generator`].
pub fn generate(model: &NGramModel, prompt: &[TokenId], max_len: usize, biases: BiasSpec, rng: &mut Rng) -> Vec<TokenId> {
    Generator::new(model, biases).generate(prompt, max_len, rng)
}

fn sample_plain(model: &NGramModel, row: Option<&Row>, rng: &mut Rng) -> TokenId {
    let alpha = model.alpha();
    let real = model.vocab_size() - 1;
    let total = row.map_or(0.0, Row::total);
    let u = rng.random::<f64>() * (total + alpha * real as f64);
    if let Some(row) = row.filter(|_| u < total) {
        let i = row.cumulative().partition_point(|&c| c <= u).min(row.tokens().len() - 1);
        return row.tokens()[i];
    }
    let k = (((u - total) / alpha) as usize).min(real - 1);
    (k + 1) as TokenId
}

fn sample_biased(model: &NGramModel, row: Option<&Row>, exp: &ExpRow, rng: &mut Rng) -> TokenId {
    let alpha = model.alpha();
    let smooth = alpha * exp.total();
    let sparse: f64 = row.map_or(0.0, |r| r.iter().map(|(t, c)| c * exp.weights[t as usize]).sum());
    let u = rng.random::<f64>() * (smooth + sparse);
    if u >= smooth {
        if let Some(row) = row {
            let mut acc = smooth;
            let mut last = row.tokens()[0];
            for (t, c) in row.iter() {
                let w = c * exp.weights[t as usize];
                if w > 0.0 {
                    acc += w;
                    last = t;
                    if u < acc {
                        return t;
                    }
                }
            }
            return last;
        }
    }
    let target = u / alpha;
    let i = exp.cum.partition_point(|&c| c <= target).clamp(1, exp.cum.len() - 1);
    i as TokenId
}

fn couple(model: &NGramModel, row: Option<&Row>, exp: &ExpRow, candidate: TokenId, rng: &mut Rng) -> TokenId {
    let alpha = model.alpha();
    let v = model.vocab_size();
    let total = row.map_or(0.0, Row::total);
    // Z = sum_t p(t) e^{b(t)}, so q(t) / p(t) = e^{b(t)} / Z.
    let sparse: f64 = row.map_or(0.0, |r| r.iter().map(|(t, c)| c * exp.weights[t as usize]).sum());
    let z = (alpha * exp.total() + sparse) / (total + alpha * (v - 1) as f64);
    let keep = exp.weights[candidate as usize] / z;
    if keep >= 1.0 || rng.random::<f64>() < keep {
        return candidate;
    }
    // Excess mass (q - p)+ is proportional to (c_t + alpha) * (e^{b(t)} - Z)+.
    let mut excess = vec![0.0; v];
    let mut acc = 0.0;
    let mut cursor = row.map(|r| r.iter().peekable());
    for (t, slot) in excess.iter_mut().enumerate().skip(1) {
        let mut c = 0.0;
        if let Some(it) = cursor.as_mut() {
            while let Some(&(tok, cnt)) = it.peek() {
                if (tok as usize) < t {
                    it.next();
                } else {
                    if tok as usize == t {
                        c = cnt;
                    }
                    break;
                }
            }
        }
        let gap = exp.weights[t] - z;
        if gap > 0.0 {
            acc += (c + alpha) * gap;
        }
        *slot = acc;
    }
    if acc <= 0.0 {
        return candidate;
    }
    let u = rng.random::<f64>() * acc;
    excess.partition_point(|&c| c <= u).clamp(1, v - 1) as TokenId
}
