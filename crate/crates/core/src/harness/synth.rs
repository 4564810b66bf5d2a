//! Synthetic multi-owner text sources.
//!
//! The real tokens `1..V` are split into contiguous topic blocks, each
//! shared by a few owners. Every context has a shared next-token row that
//! stays inside the context's block, and every owner has a private row
//! concentrated on its home block; an owner's chain mixes the two with
//! weight `s = owner_similarity` on the shared row.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Result};
use crate::prf::{derive_rng, label, Rng};
use crate::types::{Corpus, Document, OwnerId, TokenId, BOS};

/// Owners whose home block coincides.
pub const OWNERS_PER_TOPIC: usize = 2;
/// Mass a shared row keeps inside its context's block.
pub const TOPIC_STICKINESS: f64 = 1.0;
/// Dirichlet concentration of the shared rows.
pub const SHARED_CONCENTRATION: f64 = 3.0;
/// Dirichlet concentration of the owner rows.
pub const OWNER_CONCENTRATION: f64 = 3.0;

/// A stochastic row stored as a cumulative distribution over `offset..`.
#[derive(Debug, Clone, PartialEq)]
struct CumRow {
    offset: TokenId,
    cum: Vec<f64>,
}

impl CumRow {
    fn from_weights(offset: TokenId, w: Vec<f64>) -> Self {
        let total: f64 = w.iter().sum();
        let mut acc = 0.0;
        let cum = w
            .iter()
            .map(|x| {
                acc += x / total;
                acc
            })
            .collect();
        Self { offset, cum }
    }

    fn sample(&self, rng: &mut Rng) -> TokenId {
        let u = rng.random::<f64>() * self.cum[self.cum.len() - 1];
        self.offset + self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1) as TokenId
    }

    fn add_to(&self, scale: f64, out: &mut [f64]) {
        let mut prev = 0.0;
        for (i, &c) in self.cum.iter().enumerate() {
            out[self.offset as usize + i] += scale * (c - prev);
            prev = c;
        }
    }
}

/// Contiguous range `[start, end)` of a topic's tokens; `real`
/// tokens `1..=real` are split evenly.
pub fn topic_block(topic: usize, n_topics: usize, real: usize) -> (TokenId, TokenId) {
    let start = 1 + topic * real / n_topics;
    let end = 1 + (topic + 1) * real / n_topics;
    (start as TokenId, end as TokenId)
}

pub fn n_topics(config: &ExperimentConfig) -> usize {
    config.n_owners.div_ceil(OWNERS_PER_TOPIC).clamp(1, (config.vocab_size - 1) / 2)
}

pub fn owner_topic(owner: OwnerId, config: &ExperimentConfig) -> usize {
    owner * n_topics(config) / config.n_owners
}

fn token_topic(t: TokenId, n_topics: usize, real: usize) -> Option<usize> {
    (t >= 1 && (t as usize) <= real).then(|| (t as usize * n_topics - 1) / real)
}

fn dirichlet(len: usize, beta: f64, rng: &mut Rng) -> Vec<f64> {
    let gamma = Gamma::new(beta, 1.0).expect("positive concentration");
    loop {
        let w: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        if w.iter().sum::<f64>() > 0.0 {
            return w;
        }
    }
}

#[derive(Debug, PartialEq)]
struct SharedBase {
    /// `(in_block, anywhere)` per context.
    rows: Vec<(CumRow, Option<CumRow>)>,
}

/// One owner's Markov source over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnerSource {
    pub owner_id: OwnerId,
    pub topic: usize,
    pub similarity: f64,
    vocab_size: usize,
    shared: Arc<SharedBase>,
    own: Vec<CumRow>,
}

impl OwnerSource {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Dense next-token distribution after `t_prev` (index = token id).
    pub fn row(&self, t_prev: TokenId) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        let (block, spill) = &self.shared.rows[t_prev as usize];
        let rho = if spill.is_some() { TOPIC_STICKINESS } else { 1.0 };
        block.add_to(self.similarity * rho, &mut out);
        if let Some(spill) = spill {
            spill.add_to(self.similarity * (1.0 - rho), &mut out);
        }
        self.own[t_prev as usize].add_to(1.0 - self.similarity, &mut out);
        out
    }

    pub fn sample_next(&self, t_prev: TokenId, rng: &mut Rng) -> TokenId {
        if rng.random::<f64>() < self.similarity {
            let (block, spill) = &self.shared.rows[t_prev as usize];
            match spill {
                Some(spill) if rng.random::<f64>() >= TOPIC_STICKINESS => spill.sample(rng),
                _ => block.sample(rng),
            }
        } else {
            self.own[t_prev as usize].sample(rng)
        }
    }

    /// A `len`-token document started from BOS.
    pub fn sample_doc(&self, len: usize, rng: &mut Rng) -> Vec<TokenId> {
        let mut prev = BOS;
        (0..len)
            .map(|_| {
                prev = self.sample_next(prev, rng);
                prev
            })
            .collect()
    }
}

/// Draws the shared base and every owner's private component.
pub fn synth_sources(config: &ExperimentConfig) -> Result<Vec<OwnerSource>> {
    let v = config.vocab_size;
    if v < 3 {
        return Err(invalid("synthesis needs at least two real tokens"));
    }
    let topics = n_topics(config);
    let real = v - 1;
    let mut rng = derive_rng(config.master_seed, &[label("shared-base")]);
    let rows = (0..v)
        .map(|ctx| {
            let Some(topic) = token_topic(ctx as TokenId, topics, real) else {
                let w = dirichlet(real, SHARED_CONCENTRATION, &mut rng);
                return (CumRow::from_weights(1, w), None);
            };
            let (s, e) = topic_block(topic, topics, real);
            let block = CumRow::from_weights(s, dirichlet((e - s) as usize, SHARED_CONCENTRATION, &mut rng));
            let spill = (TOPIC_STICKINESS < 1.0)
                .then(|| CumRow::from_weights(1, dirichlet(real, SHARED_CONCENTRATION, &mut rng)));
            (block, spill)
        })
        .collect();
    let shared = Arc::new(SharedBase { rows });
    Ok((0..config.n_owners)
        .map(|owner| {
            let topic = owner_topic(owner, config);
            let (s, e) = topic_block(topic, topics, real);
            let mut rng = derive_rng(config.master_seed, &[label("owner-source"), owner as u64]);
            let own = (0..v)
                .map(|_| CumRow::from_weights(s, dirichlet((e - s) as usize, OWNER_CONCENTRATION, &mut rng)))
                .collect();
            OwnerSource { owner_id: owner, topic, similarity: config.owner_similarity, vocab_size: v, shared: shared.clone(), own }
        })
        .collect())
}

fn sample_docs(sources: &[OwnerSource], per_owner: usize, doc_len: usize, stream: u64, master: u64, first_id: usize) -> Vec<Document> {
    sources
        .iter()
        .flat_map(|src| {
            (0..per_owner).map(move |i| {
                let doc_id = first_id + i;
                let mut rng = derive_rng(master, &[stream, src.owner_id as u64, doc_id as u64]);
                Document::new(src.owner_id, doc_id, src.sample_doc(doc_len, &mut rng))
            })
        })
        .collect()
}

/// `docs_per_owner` documents per owner, each from its own derived stream
/// so any document can be regenerated alone.
pub fn synth_corpus(sources: &[OwnerSource], config: &ExperimentConfig) -> Result<Corpus> {
    let docs = sample_docs(sources, config.docs_per_owner, config.doc_len, label("corpus"), config.master_seed, 0);
    Corpus::new(config.vocab_size, docs)
}

/// Never-trained documents from the same sources, `docs_per_owner / 2` per
/// owner, with doc ids continuing after the training documents.
pub fn synth_holdout(sources: &[OwnerSource], config: &ExperimentConfig) -> Result<Corpus> {
    let per = (config.docs_per_owner / 2).max(1);
    let docs = sample_docs(sources, per, config.doc_len, label("holdout"), config.master_seed, config.docs_per_owner);
    Corpus::new(config.vocab_size, docs)
}

/// Count-weighted total variation between a corpus' empirical bigram
/// conditionals and the source rows.
pub fn source_tv(docs: &[&Document], source: &OwnerSource) -> f64 {
    let v = source.vocab_size;
    let mut counts: std::collections::BTreeMap<TokenId, Vec<f64>> = Default::default();
    for d in docs {
        let mut prev = BOS;
        for &t in &d.tokens {
            counts.entry(prev).or_insert_with(|| vec![0.0; v])[t as usize] += 1.0;
            prev = t;
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (ctx, row) in counts {
        let n: f64 = row.iter().sum();
        let p = source.row(ctx);
        let tv: f64 = 0.5 * row.iter().zip(&p).map(|(c, q)| (c / n - q).abs()).sum::<f64>();
        num += n * tv;
        den += n;
    }
    num / den
}
