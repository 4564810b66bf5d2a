//! Shared domain types: tokens, documents, corpora, keys and splits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prf::{prf64, to_unit};

pub type TokenId = u32;

/// Begin-of-sequence marker. Conditions the first token of every document
/// and is never stored or generated.
pub const BOS: TokenId = 0;

pub type OwnerId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub owner_id: OwnerId,
    pub doc_id: usize,
    pub tokens: Vec<TokenId>,
}

impl Document {
    pub fn new(owner_id: OwnerId, doc_id: usize, tokens: Vec<TokenId>) -> Self {
        Self { owner_id, doc_id, tokens }
    }

    pub fn doc_ref(&self) -> DocRef {
        DocRef { owner_id: self.owner_id, doc_id: self.doc_id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocRef {
    pub owner_id: OwnerId,
    pub doc_id: usize,
}

/// Owner-attributed documents over a shared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub vocab_size: usize,
    pub docs: Vec<Document>,
    /// Key identifier (`mu`) used to watermark each owner's documents.
    pub watermark_tag: Option<BTreeMap<OwnerId, u64>>,
}

impl Corpus {
    pub fn new(vocab_size: usize, docs: Vec<Document>) -> Result<Self> {
        let corpus = Self { vocab_size, docs, watermark_tag: None };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn with_tags(mut self, tags: BTreeMap<OwnerId, u64>) -> Result<Self> {
        self.watermark_tag = Some(tags);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(invalid("vocab_size must be at least 2"));
        }
        for d in &self.docs {
            if d.tokens.is_empty() {
                return Err(invalid(format!(
                    "document ({}, {}) has no tokens",
                    d.owner_id, d.doc_id
                )));
            }
            if let Some(&t) = d.tokens.iter().find(|&&t| t == BOS || t as usize >= self.vocab_size)
            {
                return Err(invalid(format!(
                    "document ({}, {}) holds token {t} outside 1..{}",
                    d.owner_id, d.doc_id, self.vocab_size
                )));
            }
            if let Some(tags) = &self.watermark_tag {
                if !tags.contains_key(&d.owner_id) {
                    return Err(invalid(format!("owner {} has no watermark tag", d.owner_id)));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.docs.iter().map(|d| d.tokens.len()).sum()
    }

    pub fn owners(&self) -> BTreeSet<OwnerId> {
        self.docs.iter().map(|d| d.owner_id).collect()
    }

    pub fn owner_docs(&self, owner: OwnerId) -> impl Iterator<Item = &Document> {
        self.docs.iter().filter(move |d| d.owner_id == owner)
    }

    /// New corpus holding the listed documents in order, tags carried over.
    pub fn subset<'a>(&self, docs: impl IntoIterator<Item = &'a Document>) -> Corpus {
        Corpus {
            vocab_size: self.vocab_size,
            docs: docs.into_iter().cloned().collect(),
            watermark_tag: self.watermark_tag.clone(),
        }
    }

    /// Union of two corpora over the same vocabulary.
    pub fn union(&self, other: &Corpus) -> Result<Corpus> {
        if self.vocab_size != other.vocab_size {
            return Err(Error::ShapeMismatch(format!(
                "vocab {} vs {}",
                self.vocab_size, other.vocab_size
            )));
        }
        let watermark_tag = match (&self.watermark_tag, &other.watermark_tag) {
            (Some(a), Some(b)) => {
                let mut tags = a.clone();
                tags.extend(b.iter().map(|(k, v)| (*k, *v)));
                Some(tags)
            }
            (None, None) => None,
            (Some(t), None) | (None, Some(t)) => Some(t.clone()),
        };
        Ok(Corpus {
            vocab_size: self.vocab_size,
            docs: self.docs.iter().chain(&other.docs).cloned().collect(),
            watermark_tag,
        })
    }
}

/// A data owner's private watermark key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatermarkKey {
    pub mu: u64,
    /// Frequency of the perturbation basis function.
    pub k_p: u32,
    /// Embedding strength.
    pub kappa_w: f64,
}

impl WatermarkKey {
    pub fn new(mu: u64, k_p: u32, kappa_w: f64) -> Result<Self> {
        if k_p < 1 {
            return Err(invalid("perturbation key k_p must be >= 1"));
        }
        if !(kappa_w >= 0.0 && kappa_w.is_finite()) {
            return Err(invalid(format!("watermark strength {kappa_w} must be finite and >= 0")));
        }
        Ok(Self { mu, k_p, kappa_w })
    }

    /// Key with the default perturbation index 1 and strength 2.
    pub fn with_mu(mu: u64) -> Self {
        Self { mu, k_p: 1, kappa_w: 2.0 }
    }
}

/// Position of `t` in the key's permuted vocabulary after `t_prev`,
/// normalized to `[0, 1)`.
#[inline]
pub fn unit_position(key: &WatermarkKey, t_prev: TokenId, t: TokenId) -> f64 {
    to_unit(prf64(key.mu, t_prev as u64, t as u64))
}

/// Checks that no two owners share a key identifier.
pub fn ensure_unique_keys(keys: &BTreeMap<OwnerId, WatermarkKey>) -> Result<()> {
    let mut seen: BTreeMap<u64, OwnerId> = BTreeMap::new();
    for (&owner, key) in keys {
        if let Some(&first) = seen.get(&key.mu) {
            return Err(Error::DuplicateKey { mu: key.mu, first, second: owner });
        }
        seen.insert(key.mu, owner);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicateMode {
    None,
    Exact,
    Semantic,
}

impl DuplicateMode {
    pub const ALL: [DuplicateMode; 3] = [DuplicateMode::None, DuplicateMode::Exact, DuplicateMode::Semantic];

    pub fn as_str(self) -> &'static str {
        match self {
            DuplicateMode::None => "none",
            DuplicateMode::Exact => "exact",
            DuplicateMode::Semantic => "semantic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    Sequential,
    Random,
}

/// Forget/retain partition of the owners plus duplicate placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub forget_owner_ids: BTreeSet<OwnerId>,
    pub retain_owner_ids: BTreeSet<OwnerId>,
    pub duplicate_mode: DuplicateMode,
    /// Forget owner -> retain owner that holds its duplicate.
    pub duplicate_assignment: BTreeMap<OwnerId, OwnerId>,
}

impl SplitSpec {
    /// Builds the split; duplicates of forget owner `f` go to the next
    /// owner `(f + 1) mod n` that is not itself forgotten.
    pub fn new(n_owners: usize, forget: BTreeSet<OwnerId>, mode: DuplicateMode) -> Result<Self> {
        if forget.is_empty() || forget.len() >= n_owners {
            return Err(invalid(format!(
                "need 1 <= |forget| < n_owners, got {} of {n_owners}",
                forget.len()
            )));
        }
        if let Some(&o) = forget.iter().find(|&&o| o >= n_owners) {
            return Err(invalid(format!("forget owner {o} out of range")));
        }
        let retain: BTreeSet<OwnerId> = (0..n_owners).filter(|o| !forget.contains(o)).collect();
        let mut assignment = BTreeMap::new();
        if mode != DuplicateMode::None {
            for &f in &forget {
                let holder = (1..n_owners)
                    .map(|step| (f + step) % n_owners)
                    .find(|o| retain.contains(o))
                    .expect("retain set is non-empty");
                assignment.insert(f, holder);
            }
        }
        let spec = Self {
            forget_owner_ids: forget,
            retain_owner_ids: retain,
            duplicate_mode: mode,
            duplicate_assignment: assignment,
        };
        spec.validate(n_owners)?;
        Ok(spec)
    }

    pub fn validate(&self, n_owners: usize) -> Result<()> {
        if !self.forget_owner_ids.is_disjoint(&self.retain_owner_ids) {
            return Err(invalid("forget and retain owners overlap"));
        }
        if self.forget_owner_ids.len() + self.retain_owner_ids.len() != n_owners {
            return Err(invalid("forget and retain owners do not cover every owner"));
        }
        if (self.duplicate_mode == DuplicateMode::None) != self.duplicate_assignment.is_empty() {
            return Err(invalid("duplicate assignment must exist iff duplicates are enabled"));
        }
        for (f, holder) in &self.duplicate_assignment {
            if !self.forget_owner_ids.contains(f) {
                return Err(invalid(format!("duplicate source {f} is not a forget owner")));
            }
            if self.forget_owner_ids.contains(holder) {
                return Err(invalid(format!("duplicate of owner {f} assigned to forget owner {holder}")));
            }
        }
        Ok(())
    }

    pub fn is_forget(&self, owner: OwnerId) -> bool {
        self.forget_owner_ids.contains(&owner)
    }
}
