//! Command-line front end: data ingestion, run configuration, model archives
//! and the `fit`, `predict`, `tune`, `simulate` and `weights` subcommands.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "fnn", version, about = "Functional neural networks for scalar-on-function regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the number of simulation replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its archive and training record.
    Fit(CommonArgs),
    /// Predict with an archived model.
    Predict(CommonArgs),
    /// Cross-validated grid search over network hyperparameters.
    Tune(CommonArgs),
    /// Run the simulation studies.
    Simulate(CommonArgs),
    /// Export functional weights of an archived model.
    Weights(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Fit(a) | Command::Predict(a) | Command::Tune(a) | Command::Simulate(a) | Command::Weights(a) => a,
        }
    }
}

/// Loads the configuration and applies command-line overrides. The
/// overridden configuration is what gets hashed into the outputs.
pub fn load(args: &CommonArgs) -> Result<LoadedConfig> {
    let mut cfg = LoadedConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.config.seed = s;
    }
    if let Some(o) = &args.out {
        let abs = std::env::current_dir().map(|d| d.join(o)).unwrap_or_else(|_| o.clone());
        cfg.config.out = Some(abs);
    }
    if let Some(r) = args.replicates {
        cfg.config.simulate.get_or_insert_with(Default::default).replicates = r;
    }
    cfg.config.validate()?;
    Ok(cfg)
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let args = cli.command.args();
    if args.threads == Some(0) {
        return Err(CliError::config("--threads must be at least 1"));
    }
    let cfg = load(args)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit(_) => commands::fit(&cfg),
        Command::Predict(_) => commands::predict(&cfg),
        Command::Tune(_) => commands::tune(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Weights(_) => commands::weights(&cfg),
    })
}
