//! Experiment pipelines: separability, calibration, benchmark, attacks and
//! detection.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::data::{outsider_key, outsider_key_at, Datasets, Pipeline, Split};
use super::eval::{answer, min_k_scores, queries, rouge_values, waterdrum_values, QuerySpec};
use crate::attacks::{decoy_curve, dilution_bias_waterfall, kgw_bias, max_similarity, threshold_grid, AttackCurvePoint, DecoyObservation, Unigram};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{auroc, fit_origin, mia_from_scores, waterdrum_value, MetricName};
use crate::prf::{derive_rng, derive_seed, label};
use crate::stats::{mean, quantile, stdev};
use crate::toylm::{train, BiasSpec, Generator, NGramModel};
use crate::types::{CalibrationMode, Corpus, DuplicateMode, WatermarkKey};
use crate::unlearn::{decay_analog, gd_analog, partial_retrain_from, tv_analog};
use crate::watermark::{fidelity_tv, signal_sum, verify_document};

/// Which training copies an experiment evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PipelineChoice {
    Watermarked,
    Unwatermarked,
    #[default]
    Both,
}

impl PipelineChoice {
    pub fn includes(self, p: Pipeline) -> bool {
        match self {
            PipelineChoice::Both => true,
            PipelineChoice::Watermarked => p == Pipeline::Watermarked,
            PipelineChoice::Unwatermarked => p == Pipeline::Unwatermarked,
        }
    }

    fn pipelines(self) -> Vec<Pipeline> {
        [Pipeline::Watermarked, Pipeline::Unwatermarked].into_iter().filter(|&p| self.includes(p)).collect()
    }
}

fn pipeline_of(metric: MetricName) -> Pipeline {
    match metric {
        MetricName::Waterdrum => Pipeline::Watermarked,
        MetricName::Rouge | MetricName::Mia => Pipeline::Unwatermarked,
    }
}

pub fn train_model(corpus: &Corpus, config: &ExperimentConfig) -> Result<NGramModel> {
    train(corpus, config.ngram_order, config.smoothing_alpha, 1.0)
}

/// Hanley–McNeil standard error of an AUROC.
pub fn auroc_stderr(a: f64, n_pos: usize, n_neg: usize) -> f64 {
    let (p, n) = (n_pos as f64, n_neg as f64);
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    ((a * (1.0 - a) + (p - 1.0) * (q1 - a * a) + (n - 1.0) * (q2 - a * a)) / (p * n)).max(0.0).sqrt()
}

fn key_lookup(data: &Datasets) -> impl Fn(&QuerySpec) -> WatermarkKey + Sync + '_ {
    move |q: &QuerySpec| data.keys[&q.doc_ref.owner_id]
}

/// Queries for the original documents of retain owners (duplicates excluded).
fn retain_queries(split: &Split, data: &Datasets) -> Vec<QuerySpec> {
    let corpus = data.corpus(split.pipeline);
    queries(corpus.docs.iter().filter(|d| !split.spec.is_forget(d.owner_id)), &data.config)
}

fn forget_queries(split: &Split, data: &Datasets) -> Vec<QuerySpec> {
    queries(&split.forget.docs, &data.config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityRow {
    pub seed: u64,
    pub mode: DuplicateMode,
    pub metric: MetricName,
    pub auroc: f64,
    /// Document-level (Hanley–McNeil) standard error.
    pub stderr: f64,
    pub retain_mean: f64,
    pub forget_mean: f64,
    pub n_retain: usize,
    pub n_forget: usize,
}

/// One per-document metric value on the retrained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub seed: u64,
    pub mode: DuplicateMode,
    pub metric: MetricName,
    pub owner_id: usize,
    pub doc_id: usize,
    pub forget: bool,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityResult {
    pub rows: Vec<SeparabilityRow>,
    pub samples: Vec<SampleRow>,
}

/// AUROC of retain against forget metric values on the retrained model,
/// per duplicate mode and metric.
pub fn run_separability(data: &Datasets, modes: &[DuplicateMode], choice: PipelineChoice, biases: &BiasSpec) -> Result<SeparabilityResult> {
    let cfg = &data.config;
    let mut out = SeparabilityResult::default();
    for &mode in modes {
        for pipeline in choice.pipelines() {
            let split = data.split(mode, pipeline)?;
            let retrained = train_model(&split.retain, cfg)?.with_role("retrained");
            let rq = retain_queries(&split, data);
            let fq = forget_queries(&split, data);
            let metrics: Vec<(MetricName, Vec<f64>, Vec<f64>)> = match pipeline {
                Pipeline::Watermarked => vec![(
                    MetricName::Waterdrum,
                    waterdrum_values(&retrained, biases, &rq, cfg.master_seed, key_lookup(data)),
                    waterdrum_values(&retrained, biases, &fq, cfg.master_seed, key_lookup(data)),
                )],
                Pipeline::Unwatermarked => vec![
                    (MetricName::Rouge, rouge_values(&retrained, &rq, cfg.master_seed)?, rouge_values(&retrained, &fq, cfg.master_seed)?),
                    (MetricName::Mia, min_k_scores(&retrained, &rq, cfg.mia_k_frac)?, min_k_scores(&retrained, &fq, cfg.mia_k_frac)?),
                ],
            };
            for (metric, r, f) in metrics {
                let a = auroc(&r, &f)?;
                out.rows.push(SeparabilityRow {
                    seed: cfg.master_seed,
                    mode,
                    metric,
                    auroc: a,
                    stderr: auroc_stderr(a, r.len(), f.len()),
                    retain_mean: mean(&r),
                    forget_mean: mean(&f),
                    n_retain: r.len(),
                    n_forget: f.len(),
                });
                for (qs, vals, forget) in [(&rq, &r, false), (&fq, &f, true)] {
                    for (q, &value) in qs.iter().zip(vals) {
                        out.samples.push(SampleRow {
                            seed: cfg.master_seed,
                            mode,
                            metric,
                            owner_id: q.doc_ref.owner_id,
                            doc_id: q.doc_ref.doc_id,
                            forget,
                            value,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub seed: u64,
    pub metric: MetricName,
    pub mode: DuplicateMode,
    pub calibration_mode: CalibrationMode,
    pub fraction: f64,
    pub trial: usize,
    /// Number of forget documents kept.
    pub k: usize,
    pub raw: f64,
    /// `raw` divided by the original model's value.
    pub aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub seed: u64,
    pub metric: MetricName,
    pub mode: DuplicateMode,
    pub calibration_mode: CalibrationMode,
    pub beta: f64,
    pub r2: f64,
    /// Mean normalized value at fraction 0, i.e. `value(0) / value(1)`.
    pub intercept_ratio: f64,
    /// Largest per-fraction range of normalized values across trials.
    pub max_spread: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub records: Vec<CalibrationRecord>,
    pub fits: Vec<CalibrationFit>,
}

struct CalibrationContext<'a> {
    data: &'a Datasets,
    split: Split,
    retain_model: NGramModel,
    forget_q: Vec<QuerySpec>,
    holdout_q: Vec<QuerySpec>,
}

impl CalibrationContext<'_> {
    fn evaluate(&self, model: &NGramModel, metric: MetricName, fraction_index: usize, biases: &BiasSpec) -> Result<f64> {
        let cfg = &self.data.config;
        Ok(match metric {
            MetricName::Waterdrum => mean(&waterdrum_values(model, biases, &self.forget_q, cfg.master_seed, key_lookup(self.data))),
            MetricName::Rouge => mean(&rouge_values(model, &self.forget_q, cfg.master_seed)?),
            MetricName::Mia => {
                let n = self.forget_q.len().min(self.holdout_q.len());
                let mut rng = derive_rng(cfg.master_seed, &[label("mia-holdout"), fraction_index as u64]);
                let mut picked = index::sample(&mut rng, self.holdout_q.len(), n).into_vec();
                picked.sort_unstable();
                let holdout: Vec<QuerySpec> = picked.iter().map(|&i| self.holdout_q[i].clone()).collect();
                let f = min_k_scores(model, &self.forget_q, cfg.mia_k_frac)?;
                let h = min_k_scores(model, &holdout, cfg.mia_k_frac)?;
                mia_from_scores(&f, &h)?
            }
        })
    }
}

/// Forget-set aggregates of partially retrained models over the fraction
/// grid, normalized by the original model, with origin fits.
pub fn run_calibration(
    data: &Datasets,
    modes: &[DuplicateMode],
    calibration_mode: CalibrationMode,
    choice: PipelineChoice,
    biases: &BiasSpec,
) -> Result<CalibrationResult> {
    let cfg = &data.config;
    let trials = match calibration_mode {
        CalibrationMode::Sequential => 1,
        CalibrationMode::Random => cfg.random_subset_trials.max(1),
    };
    let mut out = CalibrationResult::default();
    for &mode in modes {
        for pipeline in choice.pipelines() {
            let split = data.split(mode, pipeline)?;
            let forget_owners = &split.spec.forget_owner_ids;
            let holdout_docs = data.holdout.docs.iter().filter(|d| forget_owners.contains(&d.owner_id));
            let ctx = CalibrationContext {
                data,
                retain_model: train_model(&split.retain, cfg)?,
                forget_q: forget_queries(&split, data),
                holdout_q: queries(holdout_docs, cfg),
                split,
            };
            let metrics: Vec<MetricName> = MetricName::ALL.into_iter().filter(|&m| pipeline_of(m) == pipeline).collect();
            let mut raw: BTreeMap<(MetricName, usize, usize), (usize, f64)> = BTreeMap::new();
            for (fi, &fraction) in cfg.calibration_fractions.iter().enumerate() {
                for trial in 0..trials {
                    let mut rng = derive_rng(cfg.master_seed, &[label("calibration-trial"), trial as u64, fi as u64]);
                    let partial = partial_retrain_from(&ctx.retain_model, &ctx.split.forget, fraction, calibration_mode, &mut rng)?;
                    let k = partial.parameters["k"] as usize;
                    for &metric in &metrics {
                        raw.insert((metric, fi, trial), (k, ctx.evaluate(&partial.model, metric, fi, biases)?));
                    }
                }
            }
            let last = cfg.calibration_fractions.len() - 1;
            for &metric in &metrics {
                let baseline = raw[&(metric, last, 0)].1;
                if baseline == 0.0 {
                    return Err(Error::ZeroBaseline(format!("{} on the original model", metric.as_str())));
                }
                let mut points = Vec::new();
                let mut spread: f64 = 0.0;
                let mut at_zero = Vec::new();
                for (fi, &fraction) in cfg.calibration_fractions.iter().enumerate() {
                    let vals: Vec<f64> = (0..trials).map(|t| raw[&(metric, fi, t)].1 / baseline).collect();
                    spread = spread.max(vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min));
                    for (trial, &v) in vals.iter().enumerate() {
                        let (k, r) = raw[&(metric, fi, trial)];
                        out.records.push(CalibrationRecord {
                            seed: cfg.master_seed,
                            metric,
                            mode,
                            calibration_mode,
                            fraction,
                            trial,
                            k,
                            raw: r,
                            aggregate: v,
                        });
                        points.push((fraction, v));
                        if fraction == 0.0 {
                            at_zero.push(v);
                        }
                    }
                }
                let (beta, r2) = fit_origin(&points)?;
                out.fits.push(CalibrationFit {
                    seed: cfg.master_seed,
                    metric,
                    mode,
                    calibration_mode,
                    beta,
                    r2,
                    intercept_ratio: mean(&at_zero),
                    max_spread: spread,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPoint {
    pub algorithm: String,
    pub parameters: BTreeMap<String, f64>,
    pub retain_aggregate: f64,
    pub forget_aggregate: f64,
    pub raw_retain: f64,
    pub raw_forget: f64,
}

/// Normalized (retain, forget) WaterDrum aggregates of the original model,
/// the retrained reference and each unlearning analog.
pub fn run_benchmark(data: &Datasets, mode: DuplicateMode) -> Result<Vec<BenchmarkPoint>> {
    let cfg = &data.config;
    let split = data.split(mode, Pipeline::Watermarked)?;
    let original = train_model(&split.training()?, cfg)?;
    let retrained = train_model(&split.retain, cfg)?.with_role("retrained");
    let models: Vec<(String, BTreeMap<String, f64>, NGramModel)> = {
        let gd = gd_analog(&original, &split.retain, cfg.gd_extra_weight)?;
        let tv = tv_analog(&original, &split.forget, cfg.tv_lambda, cfg.tv_reinforce_weight)?;
        let decay = decay_analog(&original, &split.forget, cfg.decay_gamma)?;
        let mut v = vec![
            ("original".to_string(), BTreeMap::new(), original.clone()),
            ("retrain".to_string(), BTreeMap::new(), retrained),
        ];
        for r in [gd, tv, decay] {
            v.push((r.algorithm.as_str().to_string(), r.parameters, r.model));
        }
        v
    };
    let rq = retain_queries(&split, data);
    let fq = forget_queries(&split, data);
    let none = BiasSpec::none();
    let raws: Vec<(f64, f64)> = models
        .iter()
        .map(|(_, _, m)| {
            (
                mean(&waterdrum_values(m, &none, &rq, cfg.master_seed, key_lookup(data))),
                mean(&waterdrum_values(m, &none, &fq, cfg.master_seed, key_lookup(data))),
            )
        })
        .collect();
    let (base_r, base_f) = raws[0];
    if base_r == 0.0 || base_f == 0.0 {
        return Err(Error::ZeroBaseline("waterdrum on the original model".into()));
    }
    Ok(models
        .into_iter()
        .zip(raws)
        .map(|((algorithm, parameters, _), (r, f))| BenchmarkPoint {
            algorithm,
            parameters,
            retain_aggregate: r / base_r,
            forget_aggregate: f / base_f,
            raw_retain: r,
            raw_forget: f,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyResult {
    pub curve: Vec<AttackCurvePoint>,
    /// Sup-norm distance from `y = 1 - x` over every distinct threshold.
    pub max_deviation: f64,
    /// Smallest intercept fraction whose normalized aggregate is <= 0.2.
    pub intercept_for_0_2: f64,
    pub n_outputs: usize,
}

/// Decoy owner over the original model: outputs resembling the forget set
/// are swapped for text from the unwatermarked original model.
pub fn run_decoy(data: &Datasets, mode: DuplicateMode) -> Result<DecoyResult> {
    let cfg = &data.config;
    let split = data.split(mode, Pipeline::Watermarked)?;
    let clean_split = data.split(mode, Pipeline::Unwatermarked)?;
    let original = train_model(&split.training()?, cfg)?;
    let replacement = train_model(&clean_split.training()?, cfg)?;
    let reference: Vec<Unigram> = split.forget.docs.iter().map(|d| Unigram::new(&d.tokens)).collect::<Result<_>>()?;
    // Queries come from never-trained documents of the forget owners: similar
    // to the forget set without being drawn from it.
    let fq = queries(data.holdout.docs.iter().filter(|d| split.spec.is_forget(d.owner_id)), cfg);
    let replacer = Generator::unbiased(&replacement);
    // The decoy gates whole queries: a query is intercepted when its pooled
    // output resembles the forget set, and then every sample is replaced.
    let obs: Vec<DecoyObservation> = answer(&original, &BiasSpec::none(), &fq, cfg.master_seed, |q, s, out| {
        let key = data.keys[&q.doc_ref.owner_id];
        let mut rng = derive_rng(cfg.master_seed, &[label("decoy-replacement"), q.doc_ref.owner_id as u64, q.doc_ref.doc_id as u64, s as u64]);
        let repl = replacer.generate(&q.prompt, out.len(), &mut rng);
        (out.to_vec(), waterdrum_value(out, q.prompt_last, &key), waterdrum_value(&repl, q.prompt_last, &key))
    })
    .into_iter()
    .map(|samples| {
        let pooled: Vec<u32> = samples.iter().flat_map(|s| s.0.iter().copied()).collect();
        let n = samples.len() as f64;
        DecoyObservation {
            similarity: if pooled.is_empty() { 0.0 } else { max_similarity(&pooled, &reference).expect("non-empty") },
            raw_value: samples.iter().map(|s| s.1).sum::<f64>() / n,
            replaced_value: samples.iter().map(|s| s.2).sum::<f64>() / n,
        }
    })
    .collect();
    let sims: Vec<f64> = obs.iter().map(|o| o.similarity).collect();
    let curve = decoy_curve(&obs, &threshold_grid(&sims, cfg.decoy_grid_points))?;
    let (max_deviation, intercept_for_0_2) = dense_decoy_stats(&obs);
    Ok(DecoyResult { curve, max_deviation, intercept_for_0_2, n_outputs: obs.len() })
}

/// Walks every distinct threshold, intercepting the most similar outputs
/// first.
fn dense_decoy_stats(obs: &[DecoyObservation]) -> (f64, f64) {
    let n = obs.len() as f64;
    let base: f64 = obs.iter().map(|o| o.raw_value).sum();
    let mut sorted: Vec<&DecoyObservation> = obs.iter().collect();
    sorted.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    let mut sum = base;
    let mut dev: f64 = 0.0;
    let mut reach = f64::NAN;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].similarity == sorted[i].similarity {
            sum += sorted[j].replaced_value - sorted[j].raw_value;
            j += 1;
        }
        let x = j as f64 / n;
        let y = sum / base;
        dev = dev.max((y - (1.0 - x)).abs());
        if reach.is_nan() && y <= 0.2 {
            reach = x;
        }
        i = j;
    }
    (dev, if reach.is_nan() { 1.0 } else { reach })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionRow {
    pub attack: String,
    pub auroc: f64,
    pub r2: f64,
    pub auroc_drop: f64,
    pub r2_drop: f64,
}

/// The adversary biases: a second waterfall key and a green-list shift.
pub fn dilution_attacks(data: &Datasets) -> Result<Vec<(String, BiasSpec)>> {
    let cfg = &data.config;
    let adversary = WatermarkKey::new(outsider_key(cfg, &data.keys, "adversary-key").mu, cfg.k_p, cfg.dilution_kappa)?;
    let waterfall = dilution_bias_waterfall(adversary, &data.keys)?;
    let kgw = kgw_bias(cfg.kgw_delta, cfg.kgw_gamma, derive_seed(cfg.master_seed, &[label("kgw-key")]))?;
    Ok(vec![
        ("none".to_string(), BiasSpec::none()),
        ("waterfall".to_string(), BiasSpec::single(waterfall)),
        ("kgw".to_string(), BiasSpec::single(kgw)),
    ])
}

/// WaterDrum separability and calibration when every output is generated
/// with an adversary's extra bias, next to the undiluted baseline.
pub fn run_dilution(data: &Datasets, mode: DuplicateMode) -> Result<Vec<DilutionRow>> {
    let mut rows: Vec<DilutionRow> = Vec::new();
    for (name, biases) in dilution_attacks(data)? {
        let sep = run_separability(data, &[mode], PipelineChoice::Watermarked, &biases)?;
        let cal = run_calibration(data, &[mode], CalibrationMode::Sequential, PipelineChoice::Watermarked, &biases)?;
        let a = sep.rows[0].auroc;
        let r2 = cal.fits[0].r2;
        let (a0, r0) = rows.first().map_or((a, r2), |b| (b.auroc, b.r2));
        rows.push(DilutionRow { attack: name, auroc: a, r2, auroc_drop: a0 - a, r2_drop: r0 - r2 });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: usize,
    /// TPR at 1% FPR per query, pooling its completions truncated to `length`.
    pub tpr: f64,
    /// TPR at 1% FPR for single truncated completions.
    pub per_completion_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// TPR at 1% FPR of owner-key z on watermarked against clean documents.
    pub direct_tpr: f64,
    pub direct_threshold: f64,
    pub owner_median_z: f64,
    pub wrong_key_mean_z: f64,
    pub watermarked_fraction_detected: f64,
    pub fidelity_tv: f64,
    /// Owner-key against outsider-key per-query AUROC on the original model.
    pub propagation_auroc: f64,
    pub lengths: Vec<LengthRow>,
}

pub const DETECTION_LENGTHS: [usize; 5] = [8, 16, 32, 64, 128];

fn tpr_at_fpr(pos: &[f64], neg: &[f64], fpr: f64) -> (f64, f64) {
    let thr = quantile(neg, 1.0 - fpr);
    (pos.iter().filter(|&&p| p > thr).count() as f64 / pos.len() as f64, thr)
}

/// Direct detection, fidelity, propagation through training and length
/// scaling, all without duplicates.
pub fn run_detection(data: &Datasets) -> Result<DetectionResult> {
    let cfg = &data.config;
    let key_of = |o: usize| data.keys[&o];
    // Negatives use a fresh outsider key per document so that no single
    // key's fixed offset dominates the null.
    let outsider = |d: &crate::types::DocRef| outsider_key_at(cfg, &data.keys, "outsider-key", &[d.owner_id as u64, d.doc_id as u64]);
    let pos: Vec<f64> = data.watermarked.docs.iter().map(|d| verify_document(&d.tokens, &key_of(d.owner_id)).z).collect();
    let neg: Vec<f64> = data.clean.docs.iter().map(|d| verify_document(&d.tokens, &key_of(d.owner_id)).z).collect();
    let (direct_tpr, direct_threshold) = tpr_at_fpr(&pos, &neg, 0.01);
    let wrong: Vec<f64> = data
        .watermarked
        .docs
        .iter()
        .map(|d| verify_document(&d.tokens, &outsider(&d.doc_ref())).z)
        .collect();

    let original = train_model(&data.watermarked, cfg)?;
    let lengths: Vec<usize> = DETECTION_LENGTHS.iter().copied().filter(|&l| l <= cfg.completion_len).collect();
    let qs = queries(&data.watermarked.docs, cfg);
    // Per completion: (owner, outsider) signal sums at each length.
    let sums: Vec<Vec<Vec<(f64, f64)>>> = answer(&original, &BiasSpec::none(), &qs, cfg.master_seed, |q, _, out| {
        let own = key_of(q.doc_ref.owner_id);
        let other = outsider(&q.doc_ref);
        lengths.iter().map(|&l| (signal_sum(&out[..l], q.prompt_last, &own), signal_sum(&out[..l], q.prompt_last, &other))).collect()
    });
    let full = lengths.len() - 1;
    let n_samples = cfg.samples_per_query as f64;
    let per_query = |li: usize, owner: bool| -> Vec<f64> {
        sums.iter()
            .map(|s| {
                let total: f64 = s.iter().map(|v| if owner { v[li].0 } else { v[li].1 }).sum();
                total / (n_samples * lengths[li] as f64).sqrt()
            })
            .collect()
    };
    let per_completion = |li: usize, owner: bool| -> Vec<f64> {
        sums.iter()
            .flatten()
            .map(|v| (if owner { v[li].0 } else { v[li].1 }) / (lengths[li] as f64).sqrt())
            .collect()
    };
    let propagation_auroc = auroc(&per_query(full, true), &per_query(full, false))?;
    let length_rows = (0..lengths.len())
        .map(|li| LengthRow {
            length: lengths[li],
            tpr: tpr_at_fpr(&per_query(li, true), &per_query(li, false), 0.01).0,
            per_completion_tpr: tpr_at_fpr(&per_completion(li, true), &per_completion(li, false), 0.01).0,
        })
        .collect();
    Ok(DetectionResult {
        direct_tpr,
        direct_threshold,
        owner_median_z: quantile(&pos, 0.5),
        wrong_key_mean_z: mean(&wrong),
        watermarked_fraction_detected: pos.iter().filter(|&&z| z > 2.326).count() as f64 / pos.len() as f64,
        fidelity_tv: fidelity_tv(&data.watermarked, &data.clean)?,
        propagation_auroc,
        lengths: length_rows,
    })
}

/// Seed-level mean and standard error of separability AUROCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mode: DuplicateMode,
    pub metric: MetricName,
    pub mean_auroc: f64,
    /// Mean document-level standard error.
    pub stderr: f64,
    /// Standard error across seeds; absent with fewer than two seeds.
    pub seed_stderr: Option<f64>,
    pub n_seeds: usize,
}

pub fn summarize_seeds(rows: &[SeparabilityRow]) -> Vec<SeedSummary> {
    let mut groups: BTreeMap<(DuplicateMode, MetricName), Vec<&SeparabilityRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.mode, r.metric)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((mode, metric), rs)| {
            let a: Vec<f64> = rs.iter().map(|r| r.auroc).collect();
            let se: Vec<f64> = rs.iter().map(|r| r.stderr).collect();
            SeedSummary {
                mode,
                metric,
                mean_auroc: mean(&a),
                stderr: mean(&se),
                seed_stderr: (a.len() >= 2).then(|| stdev(&a) / (a.len() as f64).sqrt()),
                n_seeds: a.len(),
            }
        })
        .collect()
}
