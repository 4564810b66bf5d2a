//! Experiment configuration.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CalibrationMode, DuplicateMode, OwnerId};

/// Upper bound on `prompt_len + completion_len`.
pub const MAX_SEQUENCE_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vocab_size: usize,
    pub n_owners: usize,
    pub docs_per_owner: usize,
    pub doc_len: usize,
    pub ngram_order: usize,
    pub smoothing_alpha: f64,
    pub prompt_len: usize,
    pub completion_len: usize,
    pub samples_per_query: usize,
    pub n_forget_owners: usize,
    /// Explicit forget owners; overrides the last-`n_forget_owners` rule.
    pub forget_owner_ids: Option<Vec<OwnerId>>,
    pub duplicate_mode: DuplicateMode,
    pub owner_similarity: f64,
    pub master_seed: u64,
    /// Additional seeds for seed-level spread in separability reports.
    pub seeds: Vec<u64>,
    pub calibration_fractions: Vec<f64>,
    pub calibration_mode: CalibrationMode,
    pub random_subset_trials: usize,
    pub kappa_w: f64,
    pub k_p: u32,
    pub mia_k_frac: f64,
    pub gd_extra_weight: f64,
    pub tv_lambda: f64,
    pub tv_reinforce_weight: f64,
    pub decay_gamma: f64,
    pub dilution_kappa: f64,
    pub kgw_delta: f64,
    pub kgw_gamma: f64,
    pub decoy_grid_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            vocab_size: 512,
            n_owners: 20,
            docs_per_owner: 200,
            doc_len: 256,
            ngram_order: 2,
            smoothing_alpha: 0.1,
            prompt_len: 16,
            completion_len: 128,
            samples_per_query: 10,
            n_forget_owners: 1,
            forget_owner_ids: None,
            duplicate_mode: DuplicateMode::None,
            owner_similarity: 0.5,
            master_seed: 2025,
            seeds: Vec::new(),
            calibration_fractions: (0..=10).map(|i| i as f64 / 10.0).collect(),
            calibration_mode: CalibrationMode::Sequential,
            random_subset_trials: 3,
            kappa_w: 2.0,
            k_p: 1,
            mia_k_frac: 0.4,
            gd_extra_weight: 1.0,
            tv_lambda: 1.0,
            tv_reinforce_weight: 0.5,
            decay_gamma: 0.25,
            dilution_kappa: 2.0,
            kgw_delta: 2.0,
            kgw_gamma: 0.5,
            decoy_grid_points: 11,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// Reads a TOML (`.toml`) or JSON (anything else) config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::File { path: path.to_path_buf(), source })?;
        let config: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 {
            return Err(bad("vocab_size must be at least 3"));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(bad("vocab_size exceeds the token id range"));
        }
        if self.n_owners < 2 {
            return Err(bad("n_owners must be at least 2"));
        }
        if self.docs_per_owner < 2 {
            return Err(bad("docs_per_owner must be at least 2"));
        }
        if self.ngram_order < 2 {
            return Err(bad("ngram_order must be at least 2"));
        }
        if !(self.smoothing_alpha > 0.0 && self.smoothing_alpha.is_finite()) {
            return Err(bad("smoothing_alpha must be positive"));
        }
        if self.prompt_len == 0 || self.completion_len == 0 {
            return Err(bad("prompt_len and completion_len must be positive"));
        }
        if self.prompt_len + self.completion_len > MAX_SEQUENCE_LEN {
            return Err(bad(format!(
                "prompt_len + completion_len exceeds {MAX_SEQUENCE_LEN}"
            )));
        }
        if self.prompt_len >= self.doc_len {
            return Err(bad("prompt_len must be shorter than doc_len"));
        }
        if self.samples_per_query == 0 {
            return Err(bad("samples_per_query must be at least 1"));
        }
        let forget = self.forget_owners()?;
        if forget.is_empty() || forget.len() >= self.n_owners {
            return Err(bad("need 1 <= forget owners < n_owners"));
        }
        if !(0.0..=1.0).contains(&self.owner_similarity) {
            return Err(bad("owner_similarity must lie in [0, 1]"));
        }
        let f = &self.calibration_fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(bad("calibration fractions must lie in [0, 1]"));
        }
        if f.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("calibration fractions must be strictly increasing"));
        }
        if f.first() != Some(&0.0) || f.last() != Some(&1.0) {
            return Err(bad("calibration fractions must include 0 and 1"));
        }
        if self.random_subset_trials == 0 {
            return Err(bad("random_subset_trials must be at least 1"));
        }
        if !(self.kappa_w >= 0.0 && self.kappa_w.is_finite()) || self.k_p == 0 {
            return Err(bad("kappa_w must be >= 0 and k_p >= 1"));
        }
        if !(self.mia_k_frac > 0.0 && self.mia_k_frac <= 1.0) {
            return Err(bad("mia_k_frac must lie in (0, 1]"));
        }
        if self.gd_extra_weight.is_nan() || self.gd_extra_weight <= 0.0 || self.tv_lambda < 0.0 || self.tv_reinforce_weight < 0.0 {
            return Err(bad("unlearning weights out of range"));
        }
        if !(0.0..=1.0).contains(&self.decay_gamma) {
            return Err(bad("decay_gamma must lie in [0, 1]"));
        }
        if !(self.kgw_gamma > 0.0 && self.kgw_gamma < 1.0) {
            return Err(bad("kgw_gamma must lie in (0, 1)"));
        }
        if self.decoy_grid_points < 2 {
            return Err(bad("decoy_grid_points must be at least 2"));
        }
        Ok(())
    }

    /// Forget owners: the explicit list if given, else the last
    /// `n_forget_owners` owners.
    pub fn forget_owners(&self) -> Result<BTreeSet<OwnerId>> {
        match &self.forget_owner_ids {
            Some(ids) => {
                let set: BTreeSet<OwnerId> = ids.iter().copied().collect();
                if set.len() != ids.len() || set.iter().any(|&o| o >= self.n_owners) {
                    return Err(bad("forget_owner_ids must be distinct owners in range"));
                }
                Ok(set)
            }
            None => {
                if self.n_forget_owners >= self.n_owners {
                    return Err(bad("n_forget_owners must be < n_owners"));
                }
                Ok((self.n_owners - self.n_forget_owners..self.n_owners).collect())
            }
        }
    }

    /// Every seed the run covers, master seed first.
    pub fn all_seeds(&self) -> Vec<u64> {
        let mut seeds = vec![self.master_seed];
        seeds.extend(self.seeds.iter().filter(|s| **s != self.master_seed));
        seeds
    }
}
