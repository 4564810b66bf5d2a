//! The metric primitives on small hand-made inputs.

use waterdrum::metrics::{auroc, fit_origin, lcs_len, mia_from_scores, rouge_l_recall};
use waterdrum::toylm::min_k_mean;

fn main() -> waterdrum::Result<()> {
    let retain = [0.9, 0.8, 0.75, 0.6];
    let forget = [0.1, 0.3, 0.65];
    println!("auroc(retain, forget)      = {:.4}", auroc(&retain, &forget)?);

    let (beta, r2) = fit_origin(&[(0.0, 0.02), (0.5, 0.49), (1.0, 1.0)])?;
    println!("origin fit                  beta {beta:.4}  r2 {r2:.4}");

    let reference = [1, 2, 3, 4, 5, 6];
    let candidate = [1, 3, 9, 5, 6];
    println!("lcs                         = {}", lcs_len(&candidate, &reference));
    println!("rouge-L recall              = {:.4}", rouge_l_recall(&candidate, &reference)?);

    println!("min-40% mean of logprobs    = {:.4}", min_k_mean(&[-0.1, -2.0, -0.5, -3.0, -0.2], 0.4)?);
    println!("mia aggregate (2*auroc - 1) = {:.4}", mia_from_scores(&[-0.2, -0.3, -0.1], &[-1.5, -0.25, -2.0])?);
    Ok(())
}
