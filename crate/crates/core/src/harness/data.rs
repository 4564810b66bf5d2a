//! Owner keys, watermark embedding over a corpus, and forget/retain splits.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{synth_corpus, synth_holdout, synth_sources, OwnerSource};
use crate::config::ExperimentConfig;
use crate::error::{invalid, Result};
use crate::prf::{derive_rng, derive_seed, label};
use crate::toylm::{train, Bias, BiasSpec, Generator, NGramModel};
use crate::types::{ensure_unique_keys, Corpus, Document, DuplicateMode, OwnerId, SplitSpec, WatermarkKey};

/// Smoothing of the per-owner paraphraser; small so rewrites stay on the
/// owner's observed transitions.
pub const PARAPHRASER_ALPHA: f64 = 0.01;
/// Per-token rewrite probability of a semantic duplicate.
pub const SEMANTIC_REWRITE: f64 = 0.3;

/// Which copy of the data a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Watermarked,
    Unwatermarked,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Watermarked => "watermarked",
            Pipeline::Unwatermarked => "unwatermarked",
        }
    }
}

/// One key per owner, derived from the master seed; rejects collisions.
pub fn owner_keys(config: &ExperimentConfig) -> Result<BTreeMap<OwnerId, WatermarkKey>> {
    let keys: BTreeMap<OwnerId, WatermarkKey> = (0..config.n_owners)
        .map(|i| {
            let mu = derive_seed(config.master_seed, &[label("owner-key"), i as u64]);
            WatermarkKey::new(mu, config.k_p, config.kappa_w).map(|k| (i, k))
        })
        .collect::<Result<_>>()?;
    ensure_unique_keys(&keys)?;
    Ok(keys)
}

/// A key held by nobody, for null comparisons and dilution.
pub fn outsider_key(config: &ExperimentConfig, keys: &BTreeMap<OwnerId, WatermarkKey>, purpose: &str) -> WatermarkKey {
    outsider_key_at(config, keys, purpose, &[])
}

/// One of a family of outsider keys indexed by `index`.
pub fn outsider_key_at(config: &ExperimentConfig, keys: &BTreeMap<OwnerId, WatermarkKey>, purpose: &str, index: &[u64]) -> WatermarkKey {
    let mut salt = 0u64;
    loop {
        let mut labels = vec![label(purpose)];
        labels.extend_from_slice(index);
        labels.push(salt);
        let mu = derive_seed(config.master_seed, &labels);
        if keys.values().all(|k| k.mu != mu) {
            return WatermarkKey { mu, ..WatermarkKey::with_mu(0) };
        }
        salt += 1;
    }
}

/// Bigram paraphraser fitted to one owner's unwatermarked documents.
pub fn paraphraser(corpus: &Corpus, owner: OwnerId) -> Result<NGramModel> {
    let own = corpus.subset(corpus.owner_docs(owner));
    Ok(train(&own, 2, PARAPHRASER_ALPHA, 1.0)?.with_role(format!("paraphraser:{owner}")))
}

/// Paraphrasing generator biased by `key` when given.
pub fn rewriter(paraphraser: &NGramModel, key: Option<WatermarkKey>) -> Generator<'_> {
    let biases = key.map_or_else(BiasSpec::none, |key| BiasSpec::single(Bias::Waterfall { key }));
    Generator::new(paraphraser, biases)
}

/// Regenerates `tokens` through `paraphraser`, rewriting each position with
/// probability `rewrite_prob` and then embedding `key` if given.
pub fn regenerate(tokens: &[u32], paraphraser: &NGramModel, key: Option<WatermarkKey>, rewrite_prob: f64, seed: u64) -> Vec<u32> {
    rewriter(paraphraser, key).paraphrase(tokens, rewrite_prob, &mut derive_rng(seed, &[]))
}

fn paraphrasers(corpus: &Corpus) -> Result<BTreeMap<OwnerId, NGramModel>> {
    corpus
        .owners()
        .into_par_iter()
        .map(|o| paraphraser(corpus, o).map(|m| (o, m)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn watermark_with(corpus: &Corpus, keys: &BTreeMap<OwnerId, WatermarkKey>, paras: &BTreeMap<OwnerId, NGramModel>, master: u64) -> Result<Corpus> {
    ensure_unique_keys(keys)?;
    if let Some(o) = corpus.owners().into_iter().find(|o| !keys.contains_key(o)) {
        return Err(invalid(format!("owner {o} has no watermark key")));
    }
    let gens: BTreeMap<OwnerId, Generator<'_>> =
        corpus.owners().into_iter().map(|o| (o, rewriter(&paras[&o], Some(keys[&o])))).collect();
    let docs: Vec<Document> = corpus
        .docs
        .par_iter()
        .map(|d| {
            let mut rng = derive_rng(master, &[label("watermark"), d.owner_id as u64, d.doc_id as u64]);
            let tokens = gens[&d.owner_id].paraphrase(&d.tokens, 0.0, &mut rng);
            Document::new(d.owner_id, d.doc_id, tokens)
        })
        .collect();
    let tags = corpus.owners().into_iter().map(|o| (o, keys[&o].mu)).collect();
    Corpus::new(corpus.vocab_size, docs)?.with_tags(tags)
}

/// Embeds each owner's key by regenerating every document through a
/// paraphraser fitted to that owner's text, biased by the owner's key.
///
/// Randomness is derived per document from `master_seed`.
pub fn watermark_corpus(corpus: &Corpus, keys: &BTreeMap<OwnerId, WatermarkKey>, config: &ExperimentConfig) -> Result<Corpus> {
    watermark_with(corpus, keys, &paraphrasers(corpus)?, config.master_seed)
}

/// Everything synthesized once per seed and shared by every experiment.
pub struct Datasets {
    pub config: ExperimentConfig,
    pub sources: Vec<OwnerSource>,
    pub keys: BTreeMap<OwnerId, WatermarkKey>,
    pub clean: Corpus,
    pub watermarked: Corpus,
    pub holdout: Corpus,
    paraphrasers: BTreeMap<OwnerId, NGramModel>,
}

impl Datasets {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let sources = synth_sources(config)?;
        let clean = synth_corpus(&sources, config)?;
        let holdout = synth_holdout(&sources, config)?;
        let keys = owner_keys(config)?;
        let paraphrasers = paraphrasers(&clean)?;
        let watermarked = watermark_with(&clean, &keys, &paraphrasers, config.master_seed)?;
        Ok(Self { config: config.clone(), sources, keys, clean, watermarked, holdout, paraphrasers })
    }

    pub fn corpus(&self, pipeline: Pipeline) -> &Corpus {
        match pipeline {
            Pipeline::Watermarked => &self.watermarked,
            Pipeline::Unwatermarked => &self.clean,
        }
    }

    pub fn split_spec(&self, mode: DuplicateMode) -> Result<SplitSpec> {
        let forget: BTreeSet<OwnerId> = self.config.forget_owners()?;
        SplitSpec::new(self.config.n_owners, forget, mode)
    }

    pub fn split(&self, mode: DuplicateMode, pipeline: Pipeline) -> Result<Split> {
        build_split(self, &self.split_spec(mode)?, pipeline)
    }
}

/// Forget set, retain set (with duplicates) and the duplicates alone.
#[derive(Debug, Clone)]
pub struct Split {
    pub spec: SplitSpec,
    pub pipeline: Pipeline,
    pub forget: Corpus,
    /// `D_R` plus the duplicates.
    pub retain: Corpus,
    pub duplicates: Corpus,
}

impl Split {
    /// `D_F ∪ D_R ∪ D_s`.
    pub fn training(&self) -> Result<Corpus> {
        self.retain.union(&self.forget)
    }
}

/// Partitions the pipeline's corpus and materializes duplicates.
///
/// Each forget document is duplicated into its holder's data: copied
/// verbatim (exact) or partially rewritten by the forget owner's
/// paraphraser (semantic). In the watermarked pipeline the duplicate is
/// then watermarked with the holder's key. Duplicate ids continue after
/// the holder's own documents.
pub fn build_split(data: &Datasets, spec: &SplitSpec, pipeline: Pipeline) -> Result<Split> {
    let cfg = &data.config;
    spec.validate(cfg.n_owners)?;
    let corpus = data.corpus(pipeline);
    let forget = corpus.subset(corpus.docs.iter().filter(|d| spec.is_forget(d.owner_id)));
    let retain_only = corpus.subset(corpus.docs.iter().filter(|d| !spec.is_forget(d.owner_id)));
    let mut dup_docs: Vec<Document> = Vec::new();
    let mut next_id: BTreeMap<OwnerId, usize> = BTreeMap::new();
    for (&f, &holder) in &spec.duplicate_assignment {
        let rewrite = match spec.duplicate_mode {
            DuplicateMode::None => continue,
            DuplicateMode::Exact => 0.0,
            DuplicateMode::Semantic => SEMANTIC_REWRITE,
        };
        let base = *next_id.entry(holder).or_insert_with(|| {
            corpus.owner_docs(holder).map(|d| d.doc_id + 1).max().unwrap_or(0)
        });
        let sources: Vec<&Document> = data.clean.owner_docs(f).collect();
        let key = match pipeline {
            Pipeline::Watermarked => Some(data.keys[&holder]),
            Pipeline::Unwatermarked => None,
        };
        let gen = rewriter(&data.paraphrasers[&f], key);
        let made: Vec<Document> = sources
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let mut rng = derive_rng(cfg.master_seed, &[label("duplicate"), f as u64, d.doc_id as u64]);
                let tokens = if key.is_none() && rewrite == 0.0 {
                    d.tokens.clone()
                } else {
                    gen.paraphrase(&d.tokens, rewrite, &mut rng)
                };
                Document::new(holder, base + i, tokens)
            })
            .collect();
        next_id.insert(holder, base + made.len());
        dup_docs.extend(made);
    }
    let mut duplicates = Corpus::new(corpus.vocab_size, dup_docs)?;
    let mut retain = retain_only.union(&duplicates)?;
    let mut forget = forget;
    if let Some(tags) = &corpus.watermark_tag {
        let pick = |owners: BTreeSet<OwnerId>| -> BTreeMap<OwnerId, u64> { owners.into_iter().map(|o| (o, tags[&o])).collect() };
        duplicates = duplicates.clone().with_tags(pick(duplicates.owners()))?;
        retain = retain.clone().with_tags(pick(retain.owners()))?;
        forget = forget.clone().with_tags(pick(forget.owners()))?;
    }
    Ok(Split { spec: spec.clone(), pipeline, forget, retain, duplicates })
}
