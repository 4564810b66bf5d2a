//! Smoothed n-gram language model standing in for a fine-tuned LLM.
//!
//! Counts are real-valued so that unlearning analogs can reweight them;
//! probabilities use add-alpha smoothing over the whole vocabulary.

mod bias;
mod generate;
mod model;

pub use bias::{Bias, BiasSpec, BiasTable};
pub use generate::{generate, Generator};
pub use model::{min_k_avg_logprob, min_k_mean, train, NGramModel, Row};
pub(crate) use model::train_docs;
