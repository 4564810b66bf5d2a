//! Watermark-based unlearning metric on a desk-scale pipeline.
//!
//! Data owners watermark their text with private keys; a model trained on
//! it carries the watermark into its completions, and the mean watermark
//! value over an owner's queries measures how much of that owner's data the
//! model still reflects. A smoothed n-gram model stands in for the language
//! model, so every experiment runs on a laptop CPU.

pub mod attacks;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod prf;
pub mod stats;
pub mod toylm;
pub mod types;
pub mod unlearn;
pub mod watermark;

pub use error::{Error, Result};
