//! The decoy interception attack and the two dilution attacks.

use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{run_decoy, run_dilution, Datasets};

fn main() -> waterdrum::Result<()> {
    let config = ExperimentConfig::default();
    let data = Datasets::build(&config)?;

    let decoy = run_decoy(&data, config.duplicate_mode)?;
    println!("decoy: {} queries", decoy.n_outputs);
    for p in &decoy.curve {
        println!("  B {:>7.4}  intercepted {:>5.2}  aggregate {:>6.3}", p.threshold_b, p.intercept_fraction, p.normalized_aggregate);
    }
    println!("  max deviation from 1 - x: {:.3}", decoy.max_deviation);
    println!("  interception needed for aggregate 0.2: {:.2}", decoy.intercept_for_0_2);

    for row in run_dilution(&data, config.duplicate_mode)? {
        println!(
            "dilution {:<10} auroc {:.3} (drop {:+.3})  r2 {:.3} (drop {:+.3})",
            row.attack, row.auroc, row.auroc_drop, row.r2, row.r2_drop
        );
    }
    Ok(())
}
