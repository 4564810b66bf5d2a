//! Forget-set aggregates of partially retrained models against the kept
//! forget fraction, with least-squares fits through the origin.

use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{run_calibration, Datasets, PipelineChoice};
use waterdrum::toylm::BiasSpec;
use waterdrum::types::{CalibrationMode, DuplicateMode};

fn main() -> waterdrum::Result<()> {
    let data = Datasets::build(&ExperimentConfig::default())?;
    let modes = [DuplicateMode::None, DuplicateMode::Exact];
    let result = run_calibration(&data, &modes, CalibrationMode::Sequential, PipelineChoice::Both, &BiasSpec::none())?;
    for fit in &result.fits {
        let curve: Vec<String> = result
            .records
            .iter()
            .filter(|r| r.metric == fit.metric && r.mode == fit.mode)
            .map(|r| format!("{:.2}", r.aggregate))
            .collect();
        println!(
            "{:<6} {:<10} r2 {:>6.3}  value(0) {:>6.3}  [{}]",
            fit.mode.as_str(),
            fit.metric.as_str(),
            fit.r2,
            fit.intercept_ratio,
            curve.join(" ")
        );
    }
    Ok(())
}
