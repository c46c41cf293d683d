//! Command-line pipeline: snapshot generation, dataset labeling, learning-rate
//! tuning, training, evaluation and benchmarking.
//!
//! Exit codes: 0 success, 1 configuration error, 2 missing or stale upstream
//! artifact, 3 runtime failure.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::CliError;
pub use pipeline::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "vnfmig", version, about = "VNF migration solver, dataset pipeline and neural surrogate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [env: VNFMIG_OUT, default: ./vnfmig-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Generator seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for solving and tuning [default: available cores].
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Number of snapshots to generate.
    #[arg(long, global = true, value_name = "N")]
    pub snapshots: Option<u64>,
    /// Training epochs.
    #[arg(long, global = true, value_name = "N")]
    pub epochs: Option<usize>,
    /// Learning rate; overrides both tuning and the config.
    #[arg(long, global = true, value_name = "X")]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the snapshot corpus.
    Generate,
    /// Solve every migration subset and build the encoded dataset.
    Dataset,
    /// Tune the learning rate with particle swarm optimization.
    Tune,
    /// Train the surrogate.
    Train,
    /// Write accuracy, delay, feasibility and run-time reports.
    Eval,
    /// Time the solver against the surrogate.
    Bench,
    /// Run every enabled stage in order.
    All,
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<PipelineConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.generator.seed = seed;
        }
        if let Some(n) = self.snapshots {
            config.dataset.n_snapshots = n;
        }
        if let Some(epochs) = self.epochs {
            config.train.epochs = epochs;
        }
        if let Some(lr) = self.lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(CliError::Config(format!("--lr {lr} must be a positive number")));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        config.validate()?;
        Ok(config)
    }
}

/// Runs one command to completion.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = cli.resolve_config()?;
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            log::warn!("worker pool already initialized: {e}");
        }
    }
    let out = config.resolve_out_dir(cli.out.as_deref());
    let mut pipeline = Pipeline::new(config, out)?;
    match cli.command {
        Command::Generate => pipeline.generate(),
        Command::Dataset => pipeline.dataset(),
        Command::Tune => pipeline.tune().map(drop),
        Command::Train => pipeline.train(cli.lr).map(drop),
        Command::Eval => pipeline.eval().map(drop),
        Command::Bench => pipeline.bench().map(drop),
        Command::All => pipeline.all(cli.lr),
    }
}
