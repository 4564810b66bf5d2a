//! Trains the bigram stand-in model, samples completions with and without a
//! logit bias, and scores them with min-k% log-probabilities.

use waterdrum::prf::derive_rng;
use waterdrum::toylm::{min_k_avg_logprob, train, Bias, BiasSpec, Generator};
use waterdrum::types::{Corpus, Document, WatermarkKey};
use waterdrum::watermark::verify;

fn main() -> waterdrum::Result<()> {
    let vocab = 64;
    let mut rng = derive_rng(7, &[]);
    // Two cyclic "phrases" give the model something to memorize.
    let docs = (0..40)
        .map(|i| {
            let start = 1 + (i % 2) * 30;
            Document::new(0, i as usize, (0..120).map(|j| start + (j % 12)).collect())
        })
        .collect();
    let corpus = Corpus::new(vocab, docs)?;
    let model = train(&corpus, 2, 0.1, 1.0)?;

    let prompt = [1, 2, 3];
    let plain = Generator::unbiased(&model).generate(&prompt, 24, &mut rng);
    println!("unbiased completion: {plain:?}");

    let key = WatermarkKey::new(42, 1, 2.0)?;
    let biased = Generator::new(&model, BiasSpec::single(Bias::Waterfall { key })).generate(&prompt, 200, &mut rng);
    println!("biased completion z: {:+.2}", verify(&biased, 3, &key).z);
    println!("unbiased completion z: {:+.2}", verify(&plain, 3, &key).z);

    println!("min-k logprob, seen phrase:   {:.3}", min_k_avg_logprob(&model, &prompt, &plain, 0.4)?);
    let unseen: Vec<u32> = (0..24).map(|j| 20 + (j % 7)).collect();
    println!("min-k logprob, unseen tokens: {:.3}", min_k_avg_logprob(&model, &prompt, &unseen, 0.4)?);
    Ok(())
}
