//! Retain/forget separability on the retrained model for every metric and
//! duplicate mode.

use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{run_separability, Datasets, PipelineChoice};
use waterdrum::toylm::BiasSpec;
use waterdrum::types::DuplicateMode;

fn main() -> waterdrum::Result<()> {
    let data = Datasets::build(&ExperimentConfig::default())?;
    let modes = [DuplicateMode::None, DuplicateMode::Exact, DuplicateMode::Semantic];
    let result = run_separability(&data, &modes, PipelineChoice::Both, &BiasSpec::none())?;
    println!("{:<9} {:<10} {:>6} {:>7}", "mode", "metric", "auroc", "stderr");
    for row in &result.rows {
        println!("{:<9} {:<10} {:>6.3} {:>7.3}", row.mode.as_str(), row.metric.as_str(), row.auroc, row.stderr);
    }
    Ok(())
}
