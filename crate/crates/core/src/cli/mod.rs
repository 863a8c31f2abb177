//! The `countem` command-line tool. Stages communicate through files only.

mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{Decoder, HistogramConfig, PathsConfig, PredictConfig, PretrainConfig, RunConfig};
pub use manifest::{AugmentEntry, AugmentManifest, LoadedManifest, Manifest, ManifestEntry};

use crate::corpus::Split;
use crate::events::WindowSpec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "countem", version, about = "Onset transcription trained from note-count histograms")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Config override as a dotted key, e.g. `em.max_iterations=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the pretrain, train and test splits.
    Gen {
        /// Output directory (default: paths.corpus_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count onsets per window for every track of a split.
    Histify {
        /// Corpus manifest (default: paths.corpus_dir/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Window length in seconds, or `full`.
        #[arg(long)]
        window: Option<WindowSpec>,
        /// Corrupt counts by up to this relative amount.
        #[arg(long)]
        noise: Option<f64>,
        /// Seed of the corruption (default: derived from the master seed).
        #[arg(long)]
        noise_seed: Option<u64>,
        /// Split to process.
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        /// Output directory (default: paths.histogram_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Supervised training on the pretrain split.
    Pretrain {
        /// Corpus manifest (default: paths.corpus_dir/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Checkpoint path (default: paths.pretrained).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expectation-maximization from a pre-trained checkpoint.
    TrainEm {
        /// Corpus manifest (default: paths.corpus_dir/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory of per-track histogram files (default: paths.histogram_dir).
        #[arg(long)]
        histograms: Option<PathBuf>,
        /// Starting checkpoint (default: paths.pretrained).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Overrides em.max_iterations.
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Output directory (default: paths.em_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write posteriorgrams and decoded onsets for a split.
    Predict {
        /// Corpus manifest (default: paths.corpus_dir/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Model to run (default: the EM checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Split to process.
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Overrides predict.decoder.
        #[arg(long, value_enum)]
        decoder: Option<Decoder>,
        /// Histogram files for the histogram decoder.
        #[arg(long)]
        histograms: Option<PathBuf>,
        /// Output directory (default: paths.predictions_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted onsets against the references of a split.
    Eval {
        /// Corpus manifest (default: paths.corpus_dir/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory of predicted onset files (default: paths.predictions_dir).
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Split to process.
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// JSON report path; a CSV table is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl clap::ValueEnum for Split {
    fn value_variants<'a>() -> &'a [Self] {
        &Split::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

/// Parses arguments, runs one command and maps failures to exit codes:
/// 1 for usage errors, 2 for data errors.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("countem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    commands::dispatch(&cfg, cli.command)
}
