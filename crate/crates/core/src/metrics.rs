//! Unlearning metrics and the statistics used to judge them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::toylm::{min_k_avg_logprob, NGramModel};
use crate::types::{DocRef, TokenId, WatermarkKey};
use crate::watermark::verify;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Waterdrum,
    Rouge,
    Mia,
}

impl MetricName {
    pub const ALL: [MetricName; 3] = [MetricName::Waterdrum, MetricName::Rouge, MetricName::Mia];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Waterdrum => "waterdrum",
            MetricName::Rouge => "rouge",
            MetricName::Mia => "mia",
        }
    }
}

/// Metric value of one query, averaged over its sampled outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub doc_ref: DocRef,
    pub metric: MetricName,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub fraction: f64,
    pub aggregate: f64,
    pub trial_index: usize,
}

/// Verification raw mean of the completion alone, chained from the last
/// prompt token.
pub fn waterdrum_value(completion: &[TokenId], prompt_last: TokenId, key: &WatermarkKey) -> f64 {
    verify(completion, prompt_last, key).raw_mean
}

/// Uniform mean of the sample values.
pub fn aggregate(samples: &[MetricSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("metric samples"));
    }
    Ok(samples.iter().map(|s| s.value).sum::<f64>() / samples.len() as f64)
}

pub fn normalize(values: &[f64], baseline: f64) -> Result<Vec<f64>> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::ZeroBaseline(format!("baseline {baseline} cannot scale {} values", values.len())));
    }
    Ok(values.iter().map(|v| v / baseline).collect())
}

/// `P[pos > neg] + 0.5 P[pos = neg]` via midranks.
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty("auroc needs both classes"));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(invalid("auroc inputs contain NaN"));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&v| (v, true)).chain(neg.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the rank sum keeps midranks integral.
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank2 = (i + 1 + j) as u128;
        let n_pos = all[i..j].iter().filter(|x| x.1).count() as u128;
        rank2_sum += midrank2 * n_pos;
        i = j;
    }
    let p = pos.len() as u128;
    let n = neg.len() as u128;
    // U = R - p(p+1)/2, doubled.
    let u2 = rank2_sum - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Least-squares slope through the origin and its R² against the mean.
pub fn fit_origin(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(invalid("fit_origin needs at least two points"));
    }
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    if sxx == 0.0 {
        return Err(invalid("fit_origin needs a nonzero x"));
    }
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let beta = sxy / sxx;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_res: f64 = points.iter().map(|p| (p.1 - beta * p.0).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - ybar).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((beta, r2))
}

/// Longest common subsequence length, two-row DP.
pub fn lcs_len(a: &[TokenId], b: &[TokenId]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0u32; short.len() + 1];
    let mut cur = vec![0u32; short.len() + 1];
    for &x in long {
        for (j, &y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()] as usize
}

pub fn rouge_l_recall(candidate: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("rouge reference"));
    }
    Ok(lcs_len(candidate, reference) as f64 / reference.len() as f64)
}

/// A membership query: the prompt and the continuation scored under the model.
#[derive(Debug, Clone, Copy)]
pub struct MiaQuery<'a> {
    pub prompt: &'a [TokenId],
    pub continuation: &'a [TokenId],
}

/// `2 * AUROC(forget, holdout) - 1` over Min-k% scores; 1 when forget
/// documents look fully memorized, 0 when indistinguishable from holdout.
pub fn mia_aggregate(model: &NGramModel, forget: &[MiaQuery<'_>], holdout: &[MiaQuery<'_>], k_frac: f64) -> Result<f64> {
    if forget.is_empty() || holdout.is_empty() {
        return Err(Error::Empty("mia query sets"));
    }
    let score = |q: &MiaQuery<'_>| min_k_avg_logprob(model, q.prompt, q.continuation, k_frac);
    let f: Vec<f64> = forget.iter().map(score).collect::<Result<_>>()?;
    let h: Vec<f64> = holdout.iter().map(score).collect::<Result<_>>()?;
    mia_from_scores(&f, &h)
}

pub fn mia_from_scores(forget: &[f64], holdout: &[f64]) -> Result<f64> {
    Ok(2.0 * auroc(forget, holdout)? - 1.0)
}
