//! Runs every experiment, writes the report files and prints the checks.
//!
//! Usage: `cargo run --release --example full_report [out_dir]`

use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{checks, run, write_report, write_timing, PipelineChoice, Sections};

fn main() -> waterdrum::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out".into());
    let (report, timing) = run(&ExperimentConfig::default(), Sections::ALL, PipelineChoice::Both)?;
    write_report(&report, out.as_ref())?;
    write_timing(&timing, out.as_ref())?;
    for (stage, secs) in &timing.stages {
        println!("{stage:<20} {secs:>7.2}s");
    }
    for c in checks(&report) {
        println!("{} {:>2} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.criterion, c.name, c.detail);
    }
    Ok(())
}
