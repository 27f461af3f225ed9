//! Command-line pipeline for ICD-O breast-cancer topography classification:
//! synthetic corpus generation, text preparation, stratified splitting, flat
//! CNN training, cross validation, confusion analysis, hierarchical ensemble
//! training and the paired final evaluation.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::Ctx;
use config::RunConfig;
use hierpath_core::error::Result;

#[derive(Parser)]
#[command(name = "hierpath", version, about = "Pathology-report topography classification pipeline")]
struct Cli {
    /// Plain-text `key = value` config file with `[section]` headers.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; beats the config file and the HIERPATH_SEED variable.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for fold and ensemble jobs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic corpus (JSONL + XML).
    GenCorpus {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Clean and tokenize a corpus; drop Afrikaans-only reports.
    Prep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Apply the class policy and write the stratified train/val/test split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the vocabulary on the training split and train the flat model.
    TrainFlat {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// K-fold cross validation of the flat model.
    Crossval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Subset of classes, e.g. `C50.0..C50.5` or `C50.0,C50.1,C50.8`.
        #[arg(long)]
        classes: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Rank confused pairs in a saved confusion matrix and emit groupings.
    Analyze {
        #[arg(long)]
        confusion: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the parent and child classifiers for a grouping.
    TrainEnsemble {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// `expert` for the shipped default grouping, or a grouping file.
        #[arg(long, default_value = "expert")]
        grouping: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Paired evaluation of flat model vs ensemble on the untouched test set.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        flat: PathBuf,
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Render a saved confusion matrix (and optional metrics report).
    Report {
        #[arg(long)]
        confusion: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let master_seed = config.master_seed(cli.seed)?;

    #[cfg(feature = "parallel")]
    if let Some(jobs) = cli.jobs {
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    if let Some(jobs) = cli.jobs {
        log::warn!("built without the parallel feature; --jobs {jobs} has no effect");
    }

    let ctx = Ctx {
        config,
        master_seed,
    };
    match &cli.command {
        Command::GenCorpus { out_dir } => commands::cmd_gen_corpus(&ctx, out_dir),
        Command::Prep { corpus, out_dir } => commands::cmd_prep(&ctx, corpus, out_dir),
        Command::Split { corpus, out_dir } => commands::cmd_split(&ctx, corpus, out_dir),
        Command::TrainFlat {
            corpus,
            split,
            out_dir,
        } => commands::cmd_train_flat(&ctx, corpus, split, out_dir),
        Command::Crossval {
            corpus,
            out_dir,
            classes,
            k,
        } => commands::cmd_crossval(&ctx, corpus, out_dir, classes.as_deref(), *k),
        Command::Analyze { confusion, out_dir } => commands::cmd_analyze(&ctx, confusion, out_dir),
        Command::TrainEnsemble {
            corpus,
            split,
            vocab,
            grouping,
            out_dir,
        } => commands::cmd_train_ensemble(&ctx, corpus, split, vocab, grouping, out_dir),
        Command::Eval {
            corpus,
            split,
            vocab,
            flat,
            ensemble,
            out_dir,
        } => commands::cmd_eval(&ctx, corpus, split, vocab, flat, ensemble, out_dir),
        Command::Report { confusion, metrics } => {
            commands::cmd_report(confusion, metrics.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
