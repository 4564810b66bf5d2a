//! End-to-end orchestration: synthetic owners, watermarking, splits,
//! experiment pipelines and report files.

mod data;
mod eval;
mod experiments;
mod report;
mod synth;

pub use data::{build_split, outsider_key, outsider_key_at, owner_keys, paraphraser, regenerate, rewriter, watermark_corpus, Datasets, Pipeline, Split, PARAPHRASER_ALPHA, SEMANTIC_REWRITE};
pub use eval::{answer, min_k_scores, queries, rouge_values, waterdrum_values, QuerySpec};
pub use experiments::*;
pub use synth::{n_topics, owner_topic, source_tv, synth_corpus, synth_holdout, synth_sources, topic_block, OwnerSource, OWNERS_PER_TOPIC, OWNER_CONCENTRATION, SHARED_CONCENTRATION, TOPIC_STICKINESS};
pub use report::{checks, read_report, run, write_report, write_timing, Check, DilutionReportRow, FitRow, RunReport, Sections, Timing};
