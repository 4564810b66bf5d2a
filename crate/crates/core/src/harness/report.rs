//! Run orchestration, report files and threshold checks.
//!
//! `report.json` and the CSVs are a pure function of the report, so two runs
//! with the same config produce identical bytes; wall-clock timings go to a
//! separate `timing.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::Datasets;
use super::experiments::*;
use crate::attacks::AttackCurvePoint;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricName;
use crate::toylm::BiasSpec;
use crate::types::{CalibrationMode, DuplicateMode};

/// Serializes non-finite floats as strings so that JSON round-trips.
mod lossless {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&x.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Calibration fit with the r2 stored losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub seed: u64,
    pub metric: MetricName,
    pub mode: DuplicateMode,
    pub calibration_mode: CalibrationMode,
    #[serde(with = "lossless")]
    pub beta: f64,
    #[serde(with = "lossless")]
    pub r2: f64,
    #[serde(with = "lossless")]
    pub intercept_ratio: f64,
    #[serde(with = "lossless")]
    pub max_spread: f64,
}

impl From<&CalibrationFit> for FitRow {
    fn from(f: &CalibrationFit) -> Self {
        Self {
            seed: f.seed,
            metric: f.metric,
            mode: f.mode,
            calibration_mode: f.calibration_mode,
            beta: f.beta,
            r2: f.r2,
            intercept_ratio: f.intercept_ratio,
            max_spread: f.max_spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionReportRow {
    pub attack: String,
    pub auroc: f64,
    #[serde(with = "lossless")]
    pub r2: f64,
    pub auroc_drop: f64,
    #[serde(with = "lossless")]
    pub r2_drop: f64,
}

impl From<&DilutionRow> for DilutionReportRow {
    fn from(r: &DilutionRow) -> Self {
        Self { attack: r.attack.clone(), auroc: r.auroc, r2: r.r2, auroc_drop: r.auroc_drop, r2_drop: r.r2_drop }
    }
}

/// Everything one run measured. Sections that were not run stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    #[serde(default)]
    pub separability: Vec<SeparabilityRow>,
    #[serde(default)]
    pub seed_summary: Vec<SeedSummary>,
    /// Per-document values behind every separability AUROC.
    #[serde(default)]
    pub samples: Vec<SampleRow>,
    #[serde(default)]
    pub calibration: Vec<CalibrationRecord>,
    #[serde(default)]
    pub calibration_fits: Vec<FitRow>,
    #[serde(default)]
    pub benchmark: Vec<BenchmarkPoint>,
    #[serde(default)]
    pub decoy: Option<DecoyResult>,
    #[serde(default)]
    pub dilution: Vec<DilutionReportRow>,
    #[serde(default)]
    pub detection: Option<DetectionResult>,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            config,
            separability: Vec::new(),
            seed_summary: Vec::new(),
            samples: Vec::new(),
            calibration: Vec::new(),
            calibration_fits: Vec::new(),
            benchmark: Vec::new(),
            decoy: None,
            dilution: Vec::new(),
            detection: None,
        }
    }

    pub fn add_separability(&mut self, result: SeparabilityResult) {
        self.separability.extend(result.rows);
        self.samples.extend(result.samples);
        self.seed_summary = summarize_seeds(&self.separability);
    }

    pub fn add_calibration(&mut self, result: CalibrationResult) {
        self.calibration.extend(result.records);
        self.calibration_fits.extend(result.fits.iter().map(FitRow::from));
    }

    pub fn add_dilution(&mut self, rows: &[DilutionRow]) {
        self.dilution.extend(rows.iter().map(DilutionReportRow::from));
    }
}

/// Wall-clock seconds per stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stages: Vec<(String, f64)>,
}

impl Timing {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }
}

/// Which experiment families a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sections {
    pub separability: bool,
    pub calibration: bool,
    pub benchmark: bool,
    pub decoy: bool,
    pub dilution: bool,
    pub detection: bool,
}

impl Sections {
    pub const ALL: Sections =
        Sections { separability: true, calibration: true, benchmark: true, decoy: true, dilution: true, detection: true };
    pub const NONE: Sections =
        Sections { separability: false, calibration: false, benchmark: false, decoy: false, dilution: false, detection: false };
}

/// Runs the selected experiments. Separability covers every configured
/// seed; everything else uses the master seed.
pub fn run(config: &ExperimentConfig, sections: Sections, choice: PipelineChoice) -> Result<(RunReport, Timing)> {
    config.validate()?;
    let mut timing = Timing::default();
    let mut report = RunReport::new(config.clone());
    let data = timing.time("build", || Datasets::build(config))?;
    if sections.separability {
        for seed in config.all_seeds() {
            let sep = if seed == config.master_seed {
                timing.time("separability", || run_separability(&data, &DuplicateMode::ALL, choice, &BiasSpec::none()))?
            } else {
                let cfg = ExperimentConfig { master_seed: seed, ..config.clone() };
                let other = timing.time(&format!("build:{seed}"), || Datasets::build(&cfg))?;
                timing.time(&format!("separability:{seed}"), || {
                    run_separability(&other, &DuplicateMode::ALL, choice, &BiasSpec::none())
                })?
            };
            report.add_separability(sep);
        }
    }
    if sections.calibration {
        let cal = timing.time("calibration", || {
            run_calibration(&data, &DuplicateMode::ALL, config.calibration_mode, choice, &BiasSpec::none())
        })?;
        report.add_calibration(cal);
        if config.calibration_mode == CalibrationMode::Sequential && choice.includes(super::Pipeline::Watermarked) {
            let random = timing.time("calibration:random", || {
                run_calibration(&data, &[DuplicateMode::None], CalibrationMode::Random, PipelineChoice::Watermarked, &BiasSpec::none())
            })?;
            report.add_calibration(random);
        }
    }
    if sections.benchmark {
        report.benchmark = timing.time("benchmark", || run_benchmark(&data, DuplicateMode::None))?;
    }
    if sections.decoy {
        report.decoy = Some(timing.time("decoy", || run_decoy(&data, DuplicateMode::None))?);
    }
    if sections.dilution {
        let rows = timing.time("dilution", || run_dilution(&data, DuplicateMode::None))?;
        report.add_dilution(&rows);
    }
    if sections.detection {
        report.detection = Some(timing.time("detection", || run_detection(&data))?);
    }
    Ok((report, timing))
}

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File { path: path.to_path_buf(), source }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(file_error(path))?;
    Ok(())
}

/// Writes `report.json` and the CSV views into `out_dir`.
pub fn write_report(report: &RunReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(file_error(out_dir))?;
    let json = out_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&json, text).map_err(file_error(&json))?;

    write_csv(
        &out_dir.join("separability.csv"),
        report.separability.iter().map(|r| {
            (r.seed, r.mode.as_str(), r.metric.as_str(), r.auroc, r.stderr, r.retain_mean, r.forget_mean, r.n_retain, r.n_forget)
        }),
        &["seed", "mode", "metric", "auroc", "stderr", "retain_mean", "forget_mean", "n_retain", "n_forget"],
    )?;
    write_csv(
        &out_dir.join("calibration.csv"),
        report.calibration.iter().map(|r| {
            let cal = match r.calibration_mode {
                CalibrationMode::Sequential => "sequential",
                CalibrationMode::Random => "random",
            };
            (r.seed, r.metric.as_str(), r.mode.as_str(), cal, r.fraction, r.trial, r.k, r.raw, r.aggregate)
        }),
        &["seed", "metric", "mode", "calibration_mode", "fraction", "trial", "k", "raw", "aggregate"],
    )?;
    write_csv(
        &out_dir.join("benchmark.csv"),
        report.benchmark.iter().map(|p| (&p.algorithm, p.retain_aggregate, p.forget_aggregate, p.raw_retain, p.raw_forget)),
        &["algorithm", "retain_agg", "forget_agg", "raw_retain", "raw_forget"],
    )?;
    let decoy: &[AttackCurvePoint] = report.decoy.as_ref().map_or(&[], |d| &d.curve);
    write_csv(
        &out_dir.join("attacks.csv"),
        decoy.iter().map(|p| ("decoy", p.threshold_b, p.intercept_fraction, p.normalized_aggregate)),
        &["attack", "threshold_b", "intercept_fraction", "normalized_aggregate"],
    )?;
    write_csv(
        &out_dir.join("dilution.csv"),
        report.dilution.iter().map(|r| (&r.attack, r.auroc, r.r2, r.auroc_drop, r.r2_drop)),
        &["attack", "auroc", "r2", "auroc_drop", "r2_drop"],
    )?;
    Ok(())
}

pub fn write_timing(timing: &Timing, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(file_error(out_dir))?;
    let path = out_dir.join("timing.json");
    fs::write(&path, serde_json::to_string_pretty(timing)? + "\n").map_err(file_error(&path))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(file_error(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Outcome of one acceptance threshold evaluated on a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(criterion: u32, name: &str, passed: bool, detail: String) -> Check {
    Check { criterion, name: name.to_string(), passed, detail }
}

/// Evaluates every threshold the report has data for.
pub fn checks(report: &RunReport) -> Vec<Check> {
    let mut out = Vec::new();
    if let Some(d) = &report.detection {
        out.push(check(2, "direct detection", d.direct_tpr >= 0.99, format!("tpr {:.4}", d.direct_tpr)));
        out.push(check(3, "propagation", d.propagation_auroc >= 0.99, format!("auroc {:.4}", d.propagation_auroc)));
        let tprs: Vec<f64> = d.lengths.iter().map(|l| l.tpr).collect();
        let monotone = tprs.windows(2).all(|w| w[1] >= w[0]);
        let at_64 = d.lengths.iter().find(|l| l.length == 64).is_some_and(|l| l.tpr >= 0.9);
        out.push(check(7, "length scaling", monotone && at_64, format!("tpr {tprs:.3?}")));
    }
    if !report.separability.is_empty() {
        let mut by_seed: BTreeMap<u64, bool> = BTreeMap::new();
        for seed in report.separability.iter().map(|r| r.seed) {
            let get = |mode, metric| {
                report.separability.iter().find(|r| r.seed == seed && r.mode == mode && r.metric == metric).map(|r| r.auroc)
            };
            let wd_ok = DuplicateMode::ALL.iter().all(|&m| get(m, MetricName::Waterdrum).is_some_and(|a| a >= 0.95));
            let rouge_ok = match (get(DuplicateMode::Exact, MetricName::Rouge), get(DuplicateMode::Exact, MetricName::Waterdrum)) {
                (Some(r), Some(w)) => r <= 0.65 && w - r >= 0.25,
                _ => false,
            };
            by_seed.insert(seed, wd_ok && rouge_ok);
        }
        let passed = by_seed.values().filter(|&&p| p).count();
        let needed = (2 * by_seed.len()).div_ceil(3);
        out.push(check(4, "separability", passed >= needed, format!("{passed}/{} seeds pass", by_seed.len())));
    }
    let seq: Vec<&FitRow> =
        report.calibration_fits.iter().filter(|f| f.calibration_mode == CalibrationMode::Sequential).collect();
    if !seq.is_empty() {
        let wd: Vec<&&FitRow> = seq.iter().filter(|f| f.metric == MetricName::Waterdrum).collect();
        let wd_ok = !wd.is_empty() && wd.iter().all(|f| f.r2 >= 0.95);
        let baselines_fail = [MetricName::Rouge, MetricName::Mia].iter().all(|&m| {
            let fits: Vec<&&FitRow> = seq.iter().filter(|f| f.metric == m).collect();
            !fits.is_empty()
                && fits.iter().any(|f| (f.mode == DuplicateMode::Exact && f.r2 <= 0.8) || f.intercept_ratio >= 0.3)
        });
        let r2s: Vec<String> = wd.iter().map(|f| format!("{}={:.3}", f.mode.as_str(), f.r2)).collect();
        out.push(check(5, "calibration", wd_ok && baselines_fail, format!("waterdrum r2 {}", r2s.join(" "))));
    }
    if let Some(f) = report
        .calibration_fits
        .iter()
        .find(|f| f.calibration_mode == CalibrationMode::Random && f.metric == MetricName::Waterdrum)
    {
        out.push(check(
            6,
            "random subsets",
            f.max_spread <= 0.15 && f.r2 >= 0.9,
            format!("spread {:.3} r2 {:.3}", f.max_spread, f.r2),
        ));
    }
    if let Some(d) = &report.decoy {
        out.push(check(
            8,
            "decoy",
            d.max_deviation <= 0.1 && d.intercept_for_0_2 >= 0.6,
            format!("deviation {:.3} reach {:.3}", d.max_deviation, d.intercept_for_0_2),
        ));
    }
    if report.dilution.len() > 1 {
        let ok = report.dilution[1..].iter().all(|r| r.auroc_drop <= 0.06 && r.r2_drop <= 0.05);
        let detail: Vec<String> =
            report.dilution[1..].iter().map(|r| format!("{} {:.3}/{:.3}", r.attack, r.auroc_drop, r.r2_drop)).collect();
        out.push(check(9, "dilution", ok, detail.join(" ")));
    }
    if !report.benchmark.is_empty() {
        let get = |name: &str| report.benchmark.iter().find(|p| p.algorithm == name);
        let ok = match (get("original"), get("retrain")) {
            (Some(o), Some(r)) => {
                let lo = r.forget_aggregate.min(o.forget_aggregate);
                let hi = r.forget_aggregate.max(o.forget_aggregate);
                o.retain_aggregate == 1.0
                    && o.forget_aggregate == 1.0
                    && r.forget_aggregate <= 0.05
                    && r.retain_aggregate >= 0.9
                    && report
                        .benchmark
                        .iter()
                        .filter(|p| !matches!(p.algorithm.as_str(), "original" | "retrain"))
                        .all(|p| p.forget_aggregate > lo && p.forget_aggregate < hi)
            }
            _ => false,
        };
        let detail: Vec<String> = report.benchmark.iter().map(|p| format!("{} {:.3}", p.algorithm, p.forget_aggregate)).collect();
        out.push(check(11, "benchmark", ok, detail.join(" ")));
    }
    out.sort_by_key(|c| c.criterion);
    out
}
