use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use verbsense::cli::{self, RunConfig};
use verbsense::corpus::{Language, Split};
use verbsense::fixture::write_toy_fixture;
use verbsense::models::ModelKind;

#[derive(Parser)]
#[command(
    name = "verbsense",
    version,
    about = "Visual verb sense disambiguation and constrained decoding"
)]
struct Args {
    /// Run configuration (JSON). Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured target language (de, es).
    #[arg(long, global = true)]
    lang: Option<Language>,
    /// Overrides the configured modality (image, text, mm).
    #[arg(long, global = true)]
    modality: Option<ModelKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load all inputs and check cross-references.
    Validate,
    /// Train a model and write the best checkpoint and history.
    Train,
    /// Test-split accuracy with chance and majority rows.
    Evaluate,
    /// Predicted verb for every sample of a split (JSON lines).
    Predict {
        /// train, val or test; all samples when omitted.
        #[arg(long)]
        split: Option<Split>,
    },
    /// Decode one sentence, or with --eval compare baseline, predicted and oracle constraints.
    Decode {
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// One constraint phrase per line.
        #[arg(long, conflicts_with = "eval")]
        constraints: Option<PathBuf>,
        #[arg(long)]
        eval: bool,
        #[arg(long, requires = "eval")]
        sentences: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Corpus BLEU and verb accuracy of a hypothesis file.
    Score {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Gold verb per line.
        #[arg(long)]
        verbs: Option<PathBuf>,
    },
    /// Chance and majority baselines from the manifest.
    Baseline,
    /// Write a small self-contained dataset and configuration.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(args: &Args) -> Result<RunConfig> {
    let Some(path) = &args.config else {
        bail!("this command needs --config <file>");
    };
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(lang) = args.lang {
        cfg.language = Some(lang);
    }
    if let Some(m) = args.modality {
        cfg.modality = m;
    }
    Ok(cfg)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MSK_THREADS") {
        let n: usize = v.parse().with_context(|| format!("MSK_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(args: Args) -> Result<()> {
    configure_threads()?;
    match &args.command {
        Command::Validate => {
            let r = cli::cmd_validate(&load_config(&args)?)?;
            println!("{}", r.summary());
            for (split, n) in &r.splits {
                println!("  {split}: {n}");
            }
            if !r.oov_tokens.is_empty() {
                eprintln!(
                    "warning: {} query tokens lack embeddings: {}",
                    r.oov_tokens.len(),
                    r.oov_tokens.join(" ")
                );
            }
        }
        Command::Train => {
            let cfg = load_config(&args)?;
            let r = cli::cmd_train(&cfg)?;
            eprintln!(
                "wrote {} and {}",
                cfg.checkpoint.display(),
                cli::history_path(&cfg).display()
            );
            print_json(&r)?;
        }
        Command::Evaluate => print_json(&cli::cmd_evaluate(&load_config(&args)?)?)?,
        Command::Predict { split } => {
            let mut out = std::io::stdout().lock();
            for p in cli::cmd_predict(&load_config(&args)?, *split)? {
                writeln!(out, "{}", serde_json::to_string(&p)?)?;
            }
        }
        Command::Decode {
            scorer,
            vocab,
            constraints,
            eval,
            sentences,
            beam,
            max_len,
        } => {
            if *eval {
                let mut cfg = load_config(&args)?;
                cfg.decode.beam = beam.unwrap_or(cfg.decode.beam);
                cfg.decode.max_len = max_len.unwrap_or(cfg.decode.max_len);
                if vocab.is_some() {
                    cfg.decode.vocab = vocab.clone();
                }
                let r = cli::cmd_decode_eval(&cfg, sentences.as_deref(), scorer.as_deref())?;
                for s in &r.sentences {
                    for (name, out) in [("predicted", &s.predicted), ("oracle", &s.oracle)] {
                        if let Some(note) = &out.note {
                            eprintln!("sentence {}: {name} constraint dropped: {note}", s.id);
                        }
                    }
                }
                print_json(&r)?;
            } else {
                let cfg = args.config.is_some().then(|| load_config(&args)).transpose()?;
                let dc = cfg.map(|c| c.decode).unwrap_or_default();
                let scorer = scorer
                    .as_deref()
                    .or(dc.scorer.as_deref())
                    .context("decode needs --scorer")?;
                let vocab = vocab
                    .as_deref()
                    .or(dc.vocab.as_deref())
                    .context("decode needs --vocab")?;
                let out = cli::cmd_decode(
                    scorer,
                    vocab,
                    constraints.as_deref(),
                    beam.unwrap_or(dc.beam),
                    max_len.unwrap_or(dc.max_len),
                )?;
                print_json(&out)?;
            }
        }
        Command::Score { hyp, reference, verbs } => print_json(&cli::cmd_score(hyp, reference, verbs.as_deref())?)?,
        Command::Baseline => print_json(&cli::cmd_baseline(&load_config(&args)?)?)?,
        Command::Fixture { out } => {
            write_toy_fixture(out, args.seed.unwrap_or(7))
                .with_context(|| format!("writing fixture to {}", out.display()))?;
            println!("wrote {}", Path::new(out).join("config.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
