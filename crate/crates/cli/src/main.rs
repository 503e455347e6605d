use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use btel_core::corpus::{LanguageId, Split};
use btel_core::decoding::{Ensemble, EnsembleTranslator, Translator};
use btel_core::diagnostics::{collapse_report, ConstantStub, IdentityStub, OracleStub};
use btel_core::experiment::{self, Experiment, ExperimentConfig, Stage};
use btel_core::model::load_checkpoint;
use btel_core::Model;

#[derive(Parser)]
#[command(name = "btel", version, about = "Ensemble-driven back-translation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Keeps only the first N auxiliary languages, one per member.
    #[arg(long)]
    members: Option<usize>,
    /// Overrides the number of ensemble rounds.
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args, Clone)]
struct DirArgs {
    /// Experiment directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StubKind {
    Identity,
    Constant,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Runs every stage, or only `--stage`, into a directory.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; defaults to the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Runs a single stage against the directory.
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Writes the resolved configuration, corpora, evaluation sets and vocabulary.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Base training of every member.
    TrainSingle(DirArgs),
    /// Ensemble self-training rounds over the base-trained members.
    TrainEnsemble(DirArgs),
    /// Matched single-model continuation of the best base-trained member.
    Baseline(DirArgs),
    /// Final evaluation and selection, or the scores of given checkpoints.
    Evaluate {
        #[command(flatten)]
        dir: DirArgs,
        /// Scores these checkpoints as one ensemble instead of running the stage.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, default_value = "valid")]
        split: Split,
    },
    /// Collapse statistics of checkpoints or a constructed stub.
    Diagnose {
        /// Directory or configuration supplying the world.
        #[arg(long, required_unless_present = "config")]
        out: Option<PathBuf>,
        #[arg(long, conflicts_with = "out")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "stub")]
        checkpoint: Vec<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        stub: Option<StubKind>,
        #[arg(long)]
        src: Option<String>,
        #[arg(long)]
        tgt: Option<String>,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Translates stdin lines with one checkpoint or an ensemble of several.
    Translate {
        #[command(flatten)]
        dir: DirArgs,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        src: String,
        #[arg(long)]
        tgt: String,
    },
    /// Rewrites summary.csv from metrics.jsonl.
    Report(DirArgs),
}

fn load_config(a: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(n) = a.members {
        if n == 0 || n > c.pool.auxiliary.len() {
            bail!("--members {n}: the config lists {} auxiliary languages", c.pool.auxiliary.len());
        }
        c.pool.auxiliary.truncate(n);
    }
    if let Some(k) = a.rounds {
        c.rounds.rounds = k;
    }
    c.validate()?;
    Ok(c)
}

fn load_models(exp: &Experiment, paths: &[PathBuf]) -> Result<Vec<Model>> {
    paths
        .iter()
        .map(|p| {
            let (m, _, meta) = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
            meta.check_vocab(&exp.vocab)?;
            Ok(m)
        })
        .collect()
}

fn print_jsonl<T: serde::Serialize>(items: &[T]) -> Result<()> {
    let mut out = io::stdout().lock();
    for it in items {
        writeln!(out, "{}", serde_json::to_string(it)?)?;
    }
    Ok(())
}

fn stage(dir: &Path, s: Stage) -> Result<()> {
    Ok(experiment::run_stage(dir, s)?)
}

fn diagnose(
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    checkpoint: Vec<PathBuf>,
    stub: Option<StubKind>,
    src: Option<String>,
    tgt: Option<String>,
    n: usize,
) -> Result<()> {
    let (cfg, exp) = match (&out, &config) {
        (Some(dir), _) => {
            let e = Experiment::open(dir)?;
            (e.config.clone(), Some(e))
        }
        (None, Some(path)) => (ExperimentConfig::load(path)?, None),
        (None, None) => bail!("need --out or --config"),
    };
    let world = btel_core::corpus::SyntheticWorld::build(&cfg.world)?;
    let src: LanguageId = src.map(LanguageId::new).unwrap_or_else(|| cfg.pool.primary.0.clone());
    let tgt: LanguageId = tgt.map(LanguageId::new).unwrap_or_else(|| cfg.pool.primary.1.clone());
    let report = match stub {
        Some(kind) => {
            let system: Box<dyn Translator> = match kind {
                StubKind::Identity => Box::new(IdentityStub),
                StubKind::Constant => Box::new(ConstantStub(world.vocabulary(&tgt)?[..3].join(" "))),
                StubKind::Oracle => Box::new(OracleStub(&world)),
            };
            collapse_report(system.as_ref(), &world, &src, &tgt, n, cfg.seed)?
        }
        None => {
            let exp = exp.context("checkpoints need an experiment directory (--out)")?;
            let models = load_models(&exp, &checkpoint)?;
            let t = EnsembleTranslator::new(Ensemble::new(models.iter().collect())?, &exp.vocab, cfg.eval.decode.clone());
            collapse_report(&t, &world, &src, &tgt, n, cfg.seed)?
        }
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { cfg, out, stage: only } => {
            let c = load_config(&cfg)?;
            match only {
                None => {
                    let dir = experiment::run_experiment(&c, out.as_deref())?;
                    println!("{}", dir.display());
                }
                Some(s) => {
                    let dir = out.or(c.out_dir.clone()).context("no output directory given")?;
                    if s == Stage::GenData {
                        experiment::init_dir(&c, &dir)?;
                    }
                    stage(&dir, s)?;
                }
            }
        }
        Command::GenData { cfg, out } => {
            experiment::init_dir(&load_config(&cfg)?, &out)?;
            stage(&out, Stage::GenData)?;
        }
        Command::TrainSingle(d) => stage(&d.out, Stage::TrainSingle)?,
        Command::TrainEnsemble(d) => stage(&d.out, Stage::TrainEnsemble)?,
        Command::Baseline(d) => stage(&d.out, Stage::Baseline)?,
        Command::Evaluate { dir, checkpoint, split } => {
            if checkpoint.is_empty() {
                stage(&dir.out, Stage::Evaluate)?;
                let sel = std::fs::read_to_string(dir.out.join(experiment::SELECTION_FILE))?;
                print!("{sel}");
            } else {
                let exp = Experiment::open(&dir.out)?;
                let models = load_models(&exp, &checkpoint)?;
                let t = EnsembleTranslator::new(
                    Ensemble::new(models.iter().collect())?,
                    &exp.vocab,
                    exp.config.eval.decode.clone(),
                );
                let recs = exp.score_unlogged(&t, "checkpoint", split, None)?;
                print_jsonl(&recs)?;
            }
        }
        Command::Diagnose { out, config, checkpoint, stub, src, tgt, n } => {
            diagnose(out, config, checkpoint, stub, src, tgt, n)?
        }
        Command::Translate { dir, checkpoint, src, tgt } => {
            let exp = Experiment::open(&dir.out)?;
            let models = load_models(&exp, &checkpoint)?;
            let t =
                EnsembleTranslator::new(Ensemble::new(models.iter().collect())?, &exp.vocab, exp.config.eval.decode.clone());
            let lines: Vec<String> = io::stdin().lock().lines().collect::<io::Result<_>>()?;
            let outputs = t.translate(&LanguageId::new(src), &LanguageId::new(tgt), &lines)?;
            let mut w = io::stdout().lock();
            for o in outputs {
                writeln!(w, "{o}")?;
            }
        }
        Command::Report(d) => {
            experiment::report(&d.out)?;
            println!("{}", d.out.join(experiment::SUMMARY_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("BTEL_LOG_LEVEL", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
