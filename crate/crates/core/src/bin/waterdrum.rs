use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use waterdrum::config::ExperimentConfig;
use waterdrum::harness::{self, Datasets, Pipeline, PipelineChoice, Sections};
use waterdrum::io::{read_corpus, write_corpus};
use waterdrum::prf::{derive_rng, label};
use waterdrum::toylm::{train, NGramModel};
use waterdrum::unlearn::{decay_analog, gd_analog, partial_retrain, retrain, tv_analog};
use waterdrum::{Error, Result};

#[derive(Parser)]
#[command(name = "waterdrum", version, about = "Watermark-based unlearning metric toolkit")]
struct Cli {
    /// TOML or JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = PipelineArg::Both)]
    pipeline: PipelineArg,
    /// Exit with status 3 when an acceptance threshold fails.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Watermarked,
    Unwatermarked,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the clean corpus and holdout documents.
    Synth,
    /// Watermark a corpus (the synthesized one unless --input is given).
    Watermark {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the n-gram model on a corpus file.
    Train {
        #[arg(long)]
        input: PathBuf,
    },
    /// Produce an unlearned model for the configured split.
    Unlearn {
        #[arg(long, value_enum)]
        algorithm: AlgorithmArg,
        /// Kept forget fraction for `partial`.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
    },
    EvalSeparability,
    EvalCalibration,
    Bench,
    AttackDecoy,
    AttackDilute,
    /// Every experiment plus detection checks.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Retrain,
    Partial,
    Gd,
    Tv,
    Decay,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Toml(_) => ExitCode::from(2),
                Error::File { ref path, .. } if Some(path.as_path()) == cli.config.as_deref() => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_file(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::File { path: dir.to_path_buf(), source })?;
    Ok(dir.join(name))
}

fn run(cli: &Cli) -> Result<bool> {
    let config = load_config(cli)?;
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let choice = match cli.pipeline {
        PipelineArg::Watermarked => PipelineChoice::Watermarked,
        PipelineArg::Unwatermarked => PipelineChoice::Unwatermarked,
        PipelineArg::Both => PipelineChoice::Both,
    };
    let sections = match &cli.command {
        Command::Synth => {
            let sources = harness::synth_sources(&config)?;
            write_corpus(&harness::synth_corpus(&sources, &config)?, &out_file(&cli.out, "corpus.jsonl")?)?;
            write_corpus(&harness::synth_holdout(&sources, &config)?, &out_file(&cli.out, "holdout.jsonl")?)?;
            return Ok(true);
        }
        Command::Watermark { input } => {
            let corpus = match input {
                Some(path) => read_corpus(path, config.vocab_size)?,
                None => harness::synth_corpus(&harness::synth_sources(&config)?, &config)?,
            };
            let keys = harness::owner_keys(&config)?;
            let marked = harness::watermark_corpus(&corpus, &keys, &config)?;
            write_corpus(&marked, &out_file(&cli.out, "watermarked.jsonl")?)?;
            let path = out_file(&cli.out, "keys.json")?;
            std::fs::write(&path, serde_json::to_string_pretty(&keys)? + "\n")
                .map_err(|source| Error::File { path: path.clone(), source })?;
            return Ok(true);
        }
        Command::Train { input } => {
            let corpus = read_corpus(input, config.vocab_size)?;
            let model = train(&corpus, config.ngram_order, config.smoothing_alpha, 1.0)?.with_role("original");
            model.save(&out_file(&cli.out, "model.json")?)?;
            return Ok(true);
        }
        Command::Unlearn { algorithm, fraction } => {
            let model = unlearn(&config, cli.pipeline, *algorithm, *fraction)?;
            model.save(&out_file(&cli.out, "unlearned.json")?)?;
            return Ok(true);
        }
        Command::EvalSeparability => Sections { separability: true, ..Sections::NONE },
        Command::EvalCalibration => Sections { calibration: true, ..Sections::NONE },
        Command::Bench => Sections { benchmark: true, ..Sections::NONE },
        Command::AttackDecoy => Sections { decoy: true, ..Sections::NONE },
        Command::AttackDilute => Sections { dilution: true, ..Sections::NONE },
        Command::Report => Sections::ALL,
    };
    let (report, timing) = harness::run(&config, sections, choice)?;
    harness::write_report(&report, &cli.out)?;
    harness::write_timing(&timing, &cli.out)?;
    let checks = harness::checks(&report);
    for c in &checks {
        println!("{} criterion {:>2} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.criterion, c.name, c.detail);
    }
    Ok(!cli.check || checks.iter().all(|c| c.passed))
}

fn unlearn(config: &ExperimentConfig, pipeline: PipelineArg, algorithm: AlgorithmArg, fraction: f64) -> Result<NGramModel> {
    let data = Datasets::build(config)?;
    let pipeline = match pipeline {
        PipelineArg::Unwatermarked => Pipeline::Unwatermarked,
        _ => Pipeline::Watermarked,
    };
    let split = data.split(config.duplicate_mode, pipeline)?;
    let original = || harness::train_model(&split.training()?, config);
    let result = match algorithm {
        AlgorithmArg::Retrain => retrain(&split.retain, config)?,
        AlgorithmArg::Partial => {
            let mut rng = derive_rng(config.master_seed, &[label("cli-partial")]);
            partial_retrain(&split.retain, &split.forget, fraction, config.calibration_mode, &mut rng, config)?
        }
        AlgorithmArg::Gd => gd_analog(&original()?, &split.retain, config.gd_extra_weight)?,
        AlgorithmArg::Tv => tv_analog(&original()?, &split.forget, config.tv_lambda, config.tv_reinforce_weight)?,
        AlgorithmArg::Decay => decay_analog(&original()?, &split.forget, config.decay_gamma)?,
    };
    Ok(result.model)
}
