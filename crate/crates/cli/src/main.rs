//! `mcqdiff`: batch command-line driver for the difficulty-prediction
//! pipeline.
//!
//! Usage:
//!   mcqdiff --out run synth teacher
//!   mcqdiff --out run --replay run/fixtures.jsonl evaluate --corpus run/corpus.jsonl
//!   mcqdiff report --from run

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mcqdiff::irt::IrtModel;
use mcqdiff::Method;

mod commands;
mod config;

use config::RunConfig;

// ============================================================================
// Arguments
// ============================================================================

#[derive(Parser, Debug)]
#[command(name = "mcqdiff", version, about = "Predict MCQ difficulty from option-selection simulation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Sets every named seed (folds, knowledge levels, init, shuffling, synth).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Replay fixtures file; augmentation then runs offline.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,

    /// Method to evaluate; repeat for several.
    #[arg(long = "method", global = true, value_parser = parse_method)]
    methods: Vec<Method>,

    /// Number of cross-validation folds.
    #[arg(long, global = true)]
    folds: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with known difficulties.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[arg(long)]
        items: Option<usize>,
        /// Students per item (irt) or cohort size (teacher).
        #[arg(long)]
        students: Option<usize>,
    },
    /// Normalize a corpus and optionally aggregate raw responses into counts.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// canonical or lettered
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// Fit IRT parameters and label the corpus with difficulties.
    Calibrate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        irt_model: Option<IrtModel>,
    },
    /// Generate key reasoning and distractor feedback.
    Augment {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train the full model on one fold of the plan.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        augmented: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Cross-validate the selected methods and write reports.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        augmented: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Re-render the comparison table, or analyze one item per student.
    Report {
        /// Directory holding report_*.json files.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        item: Option<String>,
        #[arg(long)]
        augmented: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    Irt,
    Teacher,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: mcqdiff::eval::EvalError| e.to_string())
}

// ============================================================================
// Dispatch
// ============================================================================

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// File values first, then flags on top.
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_all_seeds(seed);
    }
    set(&mut cfg.out, cli.out.clone());
    set_opt(&mut cfg.replay, cli.replay.clone());
    set(&mut cfg.folds, cli.folds);
    if !cli.methods.is_empty() {
        cfg.methods = cli.methods.clone();
    }
    match &cli.command {
        Command::Synth { kind, items, students } => match kind {
            SynthKind::Irt => {
                set(&mut cfg.synth.irt.items, *items);
                set(&mut cfg.synth.irt.students, *students);
            }
            SynthKind::Teacher => {
                set(&mut cfg.synth.teacher.items, *items);
                set(&mut cfg.synth.teacher.cohort, *students);
            }
        },
        Command::Ingest { corpus, format, responses } => {
            set_opt(&mut cfg.corpus, corpus.clone());
            set(&mut cfg.format, format.clone());
            set_opt(&mut cfg.responses, responses.clone());
        }
        Command::Calibrate { corpus, responses, irt_model } => {
            set_opt(&mut cfg.corpus, corpus.clone());
            set_opt(&mut cfg.responses, responses.clone());
            set(&mut cfg.calibration.model, *irt_model);
        }
        Command::Augment { corpus } => set_opt(&mut cfg.corpus, corpus.clone()),
        Command::Train { corpus, augmented, epochs, alpha, .. } => {
            set_opt(&mut cfg.corpus, corpus.clone());
            set_opt(&mut cfg.augmented, augmented.clone());
            set(&mut cfg.train.epochs, *epochs);
            set(&mut cfg.train.alpha, *alpha);
        }
        Command::Evaluate { corpus, augmented, dataset, epochs, alpha } => {
            set_opt(&mut cfg.corpus, corpus.clone());
            set_opt(&mut cfg.augmented, augmented.clone());
            set(&mut cfg.dataset, dataset.clone());
            set(&mut cfg.train.epochs, *epochs);
            set(&mut cfg.train.alpha, *alpha);
        }
        Command::Report { augmented, .. } => set_opt(&mut cfg.augmented, augmented.clone()),
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli).context("config stage failed")?;
    match &cli.command {
        Command::Synth { kind, .. } => {
            let kind = match kind {
                SynthKind::Irt => "irt",
                SynthKind::Teacher => "teacher",
            };
            commands::synth(&cfg, kind).context("synth stage failed")
        }
        Command::Ingest { .. } => commands::ingest(&cfg).context("ingest stage failed"),
        Command::Calibrate { .. } => commands::calibrate_cmd(&cfg).context("calibrate stage failed"),
        Command::Augment { .. } => commands::augment(&cfg).context("augment stage failed"),
        Command::Train { fold, .. } => commands::train_cmd(&cfg, *fold).context("train stage failed"),
        Command::Evaluate { .. } => commands::evaluate(&cfg).context("evaluate stage failed"),
        Command::Report {
            from,
            checkpoint,
            item,
            bins,
            ..
        } => match (from, checkpoint, item) {
            (_, Some(ckpt), Some(item)) => {
                commands::report_item(&cfg, ckpt, item, *bins).context("report stage failed")
            }
            (Some(dir), None, None) => commands::report_table(dir, &cfg.out).context("report stage failed"),
            _ => anyhow::bail!("report stage failed: pass --from DIR, or --checkpoint with --item"),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
