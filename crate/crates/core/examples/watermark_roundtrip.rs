//! Embeds an owner's watermark by paraphrasing clean text, then verifies it
//! with the owner's key and with an unrelated key.

use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{paraphraser, regenerate, synth_corpus, synth_sources};
use waterdrum::types::WatermarkKey;
use waterdrum::watermark::{fidelity_tv, verify_document};

fn main() -> waterdrum::Result<()> {
    let config = ExperimentConfig { n_owners: 4, docs_per_owner: 50, ..ExperimentConfig::default() };
    let corpus = synth_corpus(&synth_sources(&config)?, &config)?;
    let owner = 0;
    let rewriter = paraphraser(&corpus, owner)?;
    let key = WatermarkKey::new(0x5eed, config.k_p, config.kappa_w)?;
    let stranger = WatermarkKey::new(0xbeef, config.k_p, config.kappa_w)?;

    for doc in corpus.owner_docs(owner).take(5) {
        let marked = regenerate(&doc.tokens, &rewriter, Some(key), 1.0, doc.doc_id as u64);
        println!(
            "doc {:>2}: clean z {:+6.2}  marked z {:+6.2}  wrong-key z {:+6.2}",
            doc.doc_id,
            verify_document(&doc.tokens, &key).z,
            verify_document(&marked, &key).z,
            verify_document(&marked, &stranger).z,
        );
    }

    let owner_corpus = corpus.subset(corpus.owner_docs(owner));
    let mut marked = owner_corpus.clone();
    for d in &mut marked.docs {
        d.tokens = regenerate(&d.tokens, &rewriter, Some(key), 1.0, d.doc_id as u64);
    }
    println!("bigram TV between clean and watermarked text: {:.3}", fidelity_tv(&owner_corpus, &marked)?);
    Ok(())
}
