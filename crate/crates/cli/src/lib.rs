//! Command-line front end for the qkc experiments: configuration, subcommands and outputs.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{dispatch, Command};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "qkc", version, about = "Quantum kernel SVMs under shot noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Generate (or copy) the training and test sets.
    Dataset(Common),
    /// Write exact kernel matrices and a shot-sampled training estimate.
    Kernel(Common),
    /// Train every configured classifier variant and save the models.
    Train(Common),
    /// Print the shot-count bounds for a saved model (or the exact-kernel classifier).
    Bounds(Common),
    /// Search the empirical shot count and compare it with the subgaussian bound.
    Npractical(Common),
    /// Reliability and accuracy of every variant over the shot grid.
    Sweep(Common),
    /// Depolarizing-noise comparison with and without mitigation.
    NoiseStudy(Common),
    /// Nominal classifiers trained on sampled kernels at several training shot counts.
    TrainingShotsStudy(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Sub {
    pub fn split(&self) -> (Command, &Common) {
        match self {
            Sub::Dataset(c) => (Command::Dataset, c),
            Sub::Kernel(c) => (Command::Kernel, c),
            Sub::Train(c) => (Command::Train, c),
            Sub::Bounds(c) => (Command::Bounds, c),
            Sub::Npractical(c) => (Command::Npractical, c),
            Sub::Sweep(c) => (Command::Sweep, c),
            Sub::NoiseStudy(c) => (Command::NoiseStudy, c),
            Sub::TrainingShotsStudy(c) => (Command::TrainingShotsStudy, c),
        }
    }
}

/// Parses the configuration, applies flag overrides and dispatches.
pub fn run(cli: &Cli, log: &mut dyn std::io::Write) -> Result<Vec<String>> {
    let (cmd, common) = cli.command.split();
    let mut cfg = parse_config(&common.config)?;
    if let Some(s) = common.seed {
        cfg.experiment.master_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    dispatch(cmd, &cfg, log)
}
