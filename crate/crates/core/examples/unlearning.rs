//! Runs every unlearning algorithm on the default split and places each
//! model on the (retain, forget) WaterDrum plane.

use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{run_benchmark, Datasets};

fn main() -> waterdrum::Result<()> {
    let config = ExperimentConfig::default();
    let data = Datasets::build(&config)?;
    println!("{:<12} {:>8} {:>8}", "algorithm", "retain", "forget");
    for p in run_benchmark(&data, config.duplicate_mode)? {
        println!("{:<12} {:>8.3} {:>8.3}", p.algorithm, p.retain_aggregate, p.forget_aggregate);
    }
    Ok(())
}
