//! Query construction and per-document metric evaluation.
//!
//! Every completion is sampled from a stream labelled by (owner, doc,
//! sample) only, so different models answer a query with common random
//! numbers and paired comparisons stay low-variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::metrics::{rouge_l_recall, waterdrum_value};
use crate::prf::{derive_rng, label};
use crate::toylm::{min_k_avg_logprob, BiasSpec, Generator, NGramModel};
use crate::types::{DocRef, Document, TokenId, WatermarkKey};

/// A document turned into a completion query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub doc_ref: DocRef,
    pub prompt: Vec<TokenId>,
    pub prompt_last: TokenId,
    /// Remainder of the document, the ROUGE reference.
    pub reference: Vec<TokenId>,
    pub completion_len: usize,
    pub n_samples: usize,
}

impl QuerySpec {
    pub fn from_doc(doc: &Document, config: &ExperimentConfig) -> Self {
        let p = config.prompt_len.min(doc.tokens.len().saturating_sub(1)).max(1).min(doc.tokens.len());
        Self {
            doc_ref: doc.doc_ref(),
            prompt: doc.tokens[..p].to_vec(),
            prompt_last: doc.tokens[p - 1],
            reference: doc.tokens[p..].to_vec(),
            completion_len: config.completion_len,
            n_samples: config.samples_per_query,
        }
    }
}

pub fn queries<'a>(docs: impl IntoIterator<Item = &'a Document>, config: &ExperimentConfig) -> Vec<QuerySpec> {
    docs.into_iter().map(|d| QuerySpec::from_doc(d, config)).collect()
}

/// Answers every query `n_samples` times and maps each completion.
pub fn answer<T: Send>(
    model: &NGramModel,
    biases: &BiasSpec,
    queries: &[QuerySpec],
    master_seed: u64,
    f: impl Fn(&QuerySpec, usize, &[TokenId]) -> T + Sync,
) -> Vec<Vec<T>> {
    let generator = Generator::new(model, biases.clone());
    queries
        .par_iter()
        .map(|q| {
            (0..q.n_samples)
                .map(|s| {
                    let mut rng = derive_rng(master_seed, &[label("query"), q.doc_ref.owner_id as u64, q.doc_ref.doc_id as u64, s as u64]);
                    let out = generator.generate(&q.prompt, q.completion_len, &mut rng);
                    f(q, s, &out)
                })
                .collect()
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-query WaterDrum value under the key returned by `key_of`.
pub fn waterdrum_values(
    model: &NGramModel,
    biases: &BiasSpec,
    queries: &[QuerySpec],
    master_seed: u64,
    key_of: impl Fn(&QuerySpec) -> WatermarkKey + Sync,
) -> Vec<f64> {
    answer(model, biases, queries, master_seed, |q, _, out| waterdrum_value(out, q.prompt_last, &key_of(q)))
        .iter()
        .map(|v| mean(v))
        .collect()
}

/// Per-query ROUGE-L recall against the document remainder.
pub fn rouge_values(model: &NGramModel, queries: &[QuerySpec], master_seed: u64) -> Result<Vec<f64>> {
    answer(model, &BiasSpec::none(), queries, master_seed, |q, _, out| rouge_l_recall(out, &q.reference))
        .into_iter()
        .map(|v| v.into_iter().collect::<Result<Vec<f64>>>().map(|v| mean(&v)))
        .collect()
}

/// Per-query Min-k% score of the document's own continuation.
pub fn min_k_scores(model: &NGramModel, queries: &[QuerySpec], k_frac: f64) -> Result<Vec<f64>> {
    queries.par_iter().map(|q| min_k_avg_logprob(model, &q.prompt, &q.reference, k_frac)).collect()
}
