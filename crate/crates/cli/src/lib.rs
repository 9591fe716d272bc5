//! Command-line front end for the `tutorgrade` pipeline.

pub mod config;
pub mod layout;
pub mod manifest;
pub mod stages;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use tutorgrade::desk;

use crate::config::{CommonArgs, RunConfig};
use crate::stages::run_stage;

/// Seeds of the bundled desk corpora.
pub const DESK_SEED: u64 = 42;
pub const DESK_TEST_SEED: u64 = 7;
pub const DESK_DIALOGUES: usize = 30;
pub const DESK_TEST_DIALOGUES: usize = 10;

#[derive(Debug, Parser)]
#[command(
    name = "tutorgrade",
    version,
    about = "Classify tutor responses as No / To some extent / Yes"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sanitize responses; writes cleaned.jsonl and cleaning_report.csv.
    Clean,
    /// Grouped k-fold assignment of dialogues; writes folds.json.
    Split,
    /// Train one head per fold; writes checkpoints/.
    Train,
    /// Validation-split predictions per fold and test predictions per model.
    Predict,
    /// Hard-vote ensemble of the fold models on the test corpus.
    Ensemble,
    /// Cross-validation and test metrics.
    Evaluate,
    /// Embedding export, PCA, confidence statistics and error report.
    Analyze,
    /// Run every stage and write manifest.json.
    Pipeline,
    /// Write the synthetic desk corpora used in the examples.
    Desk {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// The bundled desk corpus and its held-out companion.
pub fn desk_corpora() -> (tutorgrade::Corpus, tutorgrade::Corpus) {
    (
        desk::desk_corpus(DESK_DIALOGUES, DESK_SEED),
        desk::desk_corpus_with_prefix("test", DESK_TEST_DIALOGUES, DESK_TEST_SEED),
    )
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Clean => run_stage("clean", || stages::clean(&cfg)),
        Command::Split => run_stage("split", || stages::split(&cfg).map(drop)),
        Command::Train => run_stage("train", || stages::train(&cfg).map(drop)),
        Command::Predict => run_stage("predict", || stages::predict(&cfg)),
        Command::Ensemble => run_stage("ensemble", || stages::ensemble(&cfg).map(drop)),
        Command::Evaluate => run_stage("evaluate", || stages::evaluate_stage(&cfg).map(drop)),
        Command::Analyze => run_stage("analyze", || stages::analyze(&cfg)),
        Command::Pipeline => stages::pipeline(&cfg).map(drop),
        Command::Desk { out } => {
            let (train, test) = desk_corpora();
            train.save(&out.join("desk_corpus.jsonl"))?;
            test.save(&out.join("desk_test.jsonl"))?;
            println!("desk: wrote {}", out.display());
            Ok(())
        }
    }
}
