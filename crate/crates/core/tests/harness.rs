//! End-to-end pipeline properties: synthesis fidelity, zero-strength
//! controls, split pairing, determinism and the report and CLI formats.

use std::path::Path;
use std::process::Command;

use waterdrum::attacks::ss_cosine;
use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{
    self, checks, read_report, run, source_tv, synth_corpus, synth_sources, watermark_corpus, write_report, Datasets, Pipeline,
    PipelineChoice, Sections,
};
use waterdrum::metrics::{auroc, MetricName};
use waterdrum::prf::derive_rng;
use waterdrum::stats::{mean, stdev};
use waterdrum::toylm::{Bias, BiasSpec, Generator};
use waterdrum::types::{Corpus, DuplicateMode, WatermarkKey};
use waterdrum::watermark::{fidelity_tv, verify_document};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        vocab_size: 256,
        n_owners: 6,
        docs_per_owner: 30,
        doc_len: 128,
        completion_len: 32,
        samples_per_query: 2,
        ..ExperimentConfig::default()
    }
}

fn owner_corpus(c: &Corpus, owner: usize) -> Corpus {
    c.subset(c.owner_docs(owner))
}

#[test]
fn unshared_owner_sources_are_far_apart() {
    let cfg = ExperimentConfig { owner_similarity: 0.0, ..ExperimentConfig::default() };
    let corpus = synth_corpus(&synth_sources(&cfg).unwrap(), &cfg).unwrap();
    let owners: Vec<Corpus> = (0..cfg.n_owners).map(|o| owner_corpus(&corpus, o)).collect();
    for a in 0..owners.len() {
        for b in a + 1..owners.len() {
            let tv = fidelity_tv(&owners[a], &owners[b]).unwrap();
            assert!(tv > 0.3, "owners {a} and {b}: {tv}");
        }
    }
}

#[test]
fn synthesized_text_follows_its_source() {
    let cfg = ExperimentConfig::default();
    let sources = synth_sources(&cfg).unwrap();
    let corpus = synth_corpus(&sources, &cfg).unwrap();
    for src in &sources {
        let docs: Vec<_> = corpus.owner_docs(src.owner_id).collect();
        let tv = source_tv(&docs, src);
        assert!(tv < 0.15, "owner {}: {tv}", src.owner_id);
    }
}

#[test]
fn zero_strength_watermark_is_a_no_op() {
    let cfg = ExperimentConfig { kappa_w: 0.0, ..small() };
    let clean = synth_corpus(&synth_sources(&cfg).unwrap(), &cfg).unwrap();
    let keys = harness::owner_keys(&cfg).unwrap();
    let marked = watermark_corpus(&clean, &keys, &cfg).unwrap();
    assert!(fidelity_tv(&clean, &marked).unwrap() < 0.05);
    let zs: Vec<f64> = marked.docs.iter().map(|d| verify_document(&d.tokens, &keys[&d.owner_id]).z).collect();
    assert!(mean(&zs).abs() < 0.2 && (0.8..=1.2).contains(&stdev(&zs)), "{} {}", mean(&zs), stdev(&zs));
}

#[test]
fn zero_strength_adversary_changes_nothing() {
    let data = Datasets::build(&small()).unwrap();
    let model = harness::train_model(&data.watermarked, &data.config).unwrap();
    let adversary = Bias::Waterfall { key: WatermarkKey::new(0xadd, 1, 0.0).unwrap() };
    let plain = Generator::unbiased(&model);
    let diluted = Generator::new(&model, BiasSpec::single(adversary));
    let sample = |g: &Generator| {
        let docs = (0..200).map(|i| {
            let toks = g.generate(&[1 + i as u32], 64, &mut derive_rng(5, &[i]));
            waterdrum::types::Document::new(0, i as usize, toks)
        });
        Corpus::new(data.config.vocab_size, docs.collect()).unwrap()
    };
    assert!(fidelity_tv(&sample(&plain), &sample(&diluted)).unwrap() < 0.02);
}

#[test]
fn semantic_duplicates_resemble_their_source() {
    let data = Datasets::build(&small()).unwrap();
    let split = data.split(DuplicateMode::Semantic, Pipeline::Unwatermarked).unwrap();
    let (&forget_owner, &holder) = split.spec.duplicate_assignment.iter().next().unwrap();
    let holder_own: Vec<_> = data.clean.owner_docs(holder).collect();
    let dups: Vec<_> = split.duplicates.owner_docs(holder).collect();
    assert_eq!(dups.len(), data.config.docs_per_owner);
    for (dup, src) in dups.iter().zip(data.clean.owner_docs(forget_owner)) {
        assert_ne!(dup.tokens, src.tokens);
        let to_source = ss_cosine(&dup.tokens, &src.tokens).unwrap();
        let to_holder = holder_own.iter().map(|d| ss_cosine(&dup.tokens, &d.tokens).unwrap()).fold(0.0, f64::max);
        assert!(to_source > to_holder, "{to_source} vs {to_holder}");
    }
}

#[test]
fn pipelines_are_paired() {
    let data = Datasets::build(&small()).unwrap();
    for mode in DuplicateMode::ALL {
        let w = data.split(mode, Pipeline::Watermarked).unwrap();
        let u = data.split(mode, Pipeline::Unwatermarked).unwrap();
        assert_eq!(w.spec, u.spec);
        let refs = |c: &Corpus| c.docs.iter().map(|d| (d.doc_ref(), d.tokens.len())).collect::<Vec<_>>();
        assert_eq!(refs(&w.forget), refs(&u.forget));
        assert_eq!(refs(&w.retain), refs(&u.retain));
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn csv_rows(dir: &Path, name: &str) -> usize {
    csv::Reader::from_path(dir.join(name)).unwrap().records().count()
}

#[test]
fn report_is_deterministic_and_round_trips() {
    let cfg = ExperimentConfig { seeds: vec![7], ..small() };
    let (first, _) = run(&cfg, Sections::ALL, PipelineChoice::Both).unwrap();
    let (second, _) = run(&cfg, Sections::ALL, PipelineChoice::Both).unwrap();
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_report(&first, a.path()).unwrap();
    write_report(&second, b.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));

    let back = read_report(&a.path().join("report.json")).unwrap();
    assert_eq!(back, first);
    write_report(&back, c.path()).unwrap();
    assert_eq!(files(a.path()), files(c.path()));

    // 2 seeds x 3 modes x (1 watermarked + 2 unwatermarked metrics).
    assert_eq!(csv_rows(a.path(), "separability.csv"), 18);
    let grid = cfg.calibration_fractions.len();
    let sequential = 3 * 3 * grid;
    let random = grid * cfg.random_subset_trials;
    assert_eq!(csv_rows(a.path(), "calibration.csv"), sequential + random);
    assert_eq!(csv_rows(a.path(), "benchmark.csv"), 5);
    assert_eq!(csv_rows(a.path(), "attacks.csv"), first.decoy.as_ref().unwrap().curve.len());
    assert_eq!(csv_rows(a.path(), "dilution.csv"), 3);
    assert!(!checks(&first).is_empty());
}

#[test]
fn separability_is_recomputable_from_samples() {
    let (report, _) = run(&small(), Sections { separability: true, ..Sections::NONE }, PipelineChoice::Both).unwrap();
    assert_eq!(report.separability.len(), 9);
    for row in &report.separability {
        let pick = |forget: bool| -> Vec<f64> {
            let s = report.samples.iter().filter(|s| s.mode == row.mode && s.metric == row.metric && s.forget == forget);
            s.map(|s| s.value).collect()
        };
        let (r, f) = (pick(false), pick(true));
        assert_eq!((r.len(), f.len()), (row.n_retain, row.n_forget));
        assert_eq!(auroc(&r, &f).unwrap(), row.auroc);
        if row.metric == MetricName::Waterdrum {
            assert!(row.retain_mean > row.forget_mean);
        }
    }
}

fn cli(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_waterdrum")).args(args).arg("--out").arg(dir).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_writes_the_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(
        &config,
        "vocab_size = 256\nn_owners = 6\ndocs_per_owner = 30\ndoc_len = 128\ncompletion_len = 32\nsamples_per_query = 2\n",
    )
    .unwrap();
    let config = config.to_str().unwrap();
    let out = dir.path().join("out");

    assert_eq!(cli(&["--config", config, "synth"], &out).0, 0);
    assert!(out.join("corpus.jsonl").exists() && out.join("holdout.jsonl").exists());
    assert_eq!(cli(&["--config", config, "watermark"], &out).0, 0);
    let keys: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("keys.json")).unwrap()).unwrap();
    assert_eq!(keys.as_object().unwrap().len(), 6);
    let marked = out.join("watermarked.jsonl");
    assert_eq!(cli(&["--config", config, "train", "--input", marked.to_str().unwrap()], &out).0, 0);
    assert!(out.join("model.json").exists());
    assert_eq!(cli(&["--config", config, "unlearn", "--algorithm", "tv"], &out).0, 0);
    assert!(out.join("unlearned.json").exists());

    let (code, stdout) = cli(&["--config", config, "bench"], &out);
    assert_eq!(code, 0);
    assert!(stdout.contains("criterion 11"));
    assert!(out.join("report.json").exists() && out.join("timing.json").exists() && out.join("benchmark.csv").exists());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n_owners = 1\n").unwrap();
    assert_eq!(cli(&["--config", bad.to_str().unwrap(), "synth"], dir.path()).0, 2);
    std::fs::write(&bad, "no_such_field = 3\n").unwrap();
    assert_eq!(cli(&["--config", bad.to_str().unwrap(), "synth"], dir.path()).0, 2);
    assert_eq!(cli(&["--config", "/nonexistent/config.toml", "synth"], dir.path()).0, 2);
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(cli(&["train", "--input", missing.to_str().unwrap()], dir.path()).0, 1);

    // A failing acceptance threshold only changes the status under --check.
    let tiny = dir.path().join("tiny.toml");
    std::fs::write(&tiny, "vocab_size = 64\nn_owners = 4\ndocs_per_owner = 4\ndoc_len = 32\nprompt_len = 4\ncompletion_len = 8\nsamples_per_query = 1\n").unwrap();
    let tiny = tiny.to_str().unwrap();
    assert_eq!(cli(&["--config", tiny, "attack-decoy"], dir.path()).0, 0);
    let (code, stdout) = cli(&["--config", tiny, "--check", "attack-decoy"], dir.path());
    assert_eq!(code, if stdout.contains("FAIL") { 3 } else { 0 });
}
