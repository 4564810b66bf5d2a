//! Monte-Carlo properties of embedding and verification.

use std::sync::OnceLock;

use rand::Rng as _;
use waterdrum::attacks::dilution_bias_waterfall;
use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{answer, outsider_key_at, queries, train_model, Datasets, Pipeline};
use waterdrum::metrics::auroc;
use waterdrum::prf::{derive_rng, label};
use waterdrum::stats::{mean, pearson, stdev};
use waterdrum::toylm::{train, Bias, BiasSpec, Generator, NGramModel};
use waterdrum::types::{Corpus, Document, DuplicateMode, TokenId, WatermarkKey, BOS};
use waterdrum::watermark::{transition_signal, verify};

fn data() -> &'static Datasets {
    static DATA: OnceLock<Datasets> = OnceLock::new();
    DATA.get_or_init(|| Datasets::build(&ExperimentConfig::default()).unwrap())
}

/// A non-degenerate base model: random sparse-ish bigram text over V=512.
fn base_model() -> NGramModel {
    let mut rng = derive_rng(99, &[]);
    let docs = (0..200)
        .map(|i| {
            let mut t: TokenId = rng.random_range(1..512);
            let toks = (0..256)
                .map(|_| {
                    t = 1 + (t + rng.random_range(0..40)) % 511;
                    t
                })
                .collect();
            Document::new(0, i, toks)
        })
        .collect();
    train(&Corpus::new(512, docs).unwrap(), 2, 0.1, 1.0).unwrap()
}

fn rate(zs: &[f64], threshold: f64) -> f64 {
    zs.iter().filter(|&&z| z > threshold).count() as f64 / zs.len() as f64
}

/// One-sided Mann-Whitney p-value from the AUROC under the normal approximation.
fn mann_whitney_p(pos: &[f64], neg: &[f64]) -> f64 {
    let (n, m) = (pos.len() as f64, neg.len() as f64);
    let u = auroc(pos, neg).unwrap() * n * m;
    let z = (u - n * m / 2.0) / (n * m * (n + m + 1.0) / 12.0).sqrt();
    // Upper tail of the standard normal, bounded by the Mills ratio.
    (-z * z / 2.0).exp() / (z * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn null_fpr_at_both_thresholds() {
    let mut rng = derive_rng(1, &[]);
    let zs: Vec<f64> = (0..4000)
        .map(|_| {
            let key = WatermarkKey::with_mu(rng.random());
            let toks: Vec<TokenId> = (0..256).map(|_| rng.random_range(1..512)).collect();
            verify(&toks, BOS, &key).z
        })
        .collect();
    // Three binomial standard errors around 5% and 1%.
    assert!((0.0397..=0.0603).contains(&rate(&zs, 1.645)), "{}", rate(&zs, 1.645));
    assert!((0.0053..=0.0147).contains(&rate(&zs, 2.326)), "{}", rate(&zs, 2.326));
    assert!(mean(&zs).abs() < 0.06 && (stdev(&zs) - 1.0).abs() < 0.05);
}

#[test]
fn other_keys_see_the_null_on_watermarked_text() {
    let model = base_model();
    let mut rng = derive_rng(2, &[]);
    let (mut own, mut other) = (Vec::new(), Vec::new());
    for i in 0..1000 {
        let key = WatermarkKey::with_mu(rng.random());
        let stranger = WatermarkKey::with_mu(rng.random());
        let text = Generator::new(&model, BiasSpec::single(Bias::Waterfall { key })).generate(&[1 + i % 511], 256, &mut rng);
        own.push(verify(&text, text[0], &key).z);
        other.push(verify(&text, text[0], &stranger).z);
    }
    assert!(mean(&other).abs() < 0.1, "{}", mean(&other));
    assert!((0.85..=1.15).contains(&stdev(&other)));
    assert!(own.iter().all(|&z| z > 2.326));
}

#[test]
fn embedded_signal_increases_with_strength() {
    let model = base_model();
    let key = |kappa| WatermarkKey::new(77, 1, kappa).unwrap();
    let signal: Vec<f64> = [0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&kappa| {
            let gen = Generator::new(&model, BiasSpec::single(Bias::Waterfall { key: key(kappa) }));
            let mut rng = derive_rng(3, &[]);
            let raw: Vec<f64> = (0..300).map(|i| verify(&gen.generate(&[1 + i], 128, &mut rng), 1 + i, &key(kappa)).raw_mean).collect();
            mean(&raw)
        })
        .collect();
    assert!(signal[0].abs() < 0.03, "{signal:?}");
    assert!(signal.windows(2).all(|w| w[1] > w[0] + 0.05), "{signal:?}");
}

#[test]
fn trained_model_inherits_the_watermark() {
    let data = data();
    let cfg = &data.config;
    let owner = 0;
    let key = data.keys[&owner];
    let model = train_model(&data.watermarked, cfg).unwrap();

    // Count-weighted share of training contexts whose expected basis value is positive.
    let (mut positive, mut total) = (0.0, 0.0);
    let gen = Generator::unbiased(&model);
    let mut seen = std::collections::BTreeMap::<TokenId, f64>::new();
    for d in data.watermarked.owner_docs(owner) {
        let mut prev = BOS;
        for &t in &d.tokens {
            *seen.entry(prev).or_default() += 1.0;
            prev = t;
        }
    }
    for (&ctx, &n) in &seen {
        let p = gen.distribution(&[ctx]);
        let expected: f64 = (0..cfg.vocab_size as TokenId).map(|t| p[t as usize] * transition_signal(&key, ctx, t)).sum();
        total += n;
        if expected > 0.0 {
            positive += n;
        }
    }
    assert!(positive / total > 0.95, "{}", positive / total);

    let qs = queries(data.holdout.owner_docs(owner), cfg);
    let owned: Vec<f64> = answer(&model, &BiasSpec::none(), &qs, cfg.master_seed, |q, _, out| verify(out, q.prompt_last, &key).z)
        .concat();
    let null: Vec<f64> = answer(&model, &BiasSpec::none(), &qs, cfg.master_seed, |q, s, out| {
        let k = outsider_key_at(cfg, &data.keys, "null", &[q.doc_ref.doc_id as u64, s as u64]);
        verify(out, q.prompt_last, &k).z
    })
    .concat();
    assert!(mann_whitney_p(&owned, &null) < 1e-6);
}

#[test]
fn adversary_and_owner_statistics_are_uncorrelated() {
    let data = data();
    let cfg = &data.config;
    let split = data.split(DuplicateMode::None, Pipeline::Watermarked).unwrap();
    let model = train_model(&split.training().unwrap(), cfg).unwrap();
    let adversary = outsider_key_at(cfg, &data.keys, "adversary", &[label("dilution-test")]);
    let bias = BiasSpec::single(dilution_bias_waterfall(adversary, &data.keys).unwrap());
    let mut qs = queries(data.holdout.docs.iter().step_by(data.holdout.len() / 500), cfg);
    qs.truncate(500);
    for q in &mut qs {
        q.n_samples = 1;
    }
    let pairs: Vec<(f64, f64)> = answer(&model, &bias, &qs, cfg.master_seed, |q, _, out| {
        (verify(out, q.prompt_last, &data.keys[&q.doc_ref.owner_id]).raw_mean, verify(out, q.prompt_last, &adversary).raw_mean)
    })
    .concat();
    assert_eq!(pairs.len(), 500);
    let (own, adv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    assert!(mean(&adv) > 0.5, "adversary signal {}", mean(&adv));
    assert!(pearson(&own, &adv).abs() < 0.1, "r {}", pearson(&own, &adv));
}
