//! Experiment runner behind the `orthosim` binary.
//!
//! - [`config`]: TOML experiment files and command-line overrides
//! - [`commands`]: multi-cell runs and the two-client oscillation study
//! - [`plot`]: SVG accuracy curves from metrics CSVs

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, Result};

use config::{load_experiment, Overrides};

#[derive(Debug, Parser)]
#[command(name = "orthosim", version, about = "Asynchronous federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every (strategy, seed) cell of a config and write metrics plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Two clients on disjoint classes, FedAsync vs OrthoFL, slow client at 30/60/100 s.
    Motivating {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Draw accuracy against simulated time for one or more metrics CSVs.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output SVG file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a config, apply overrides and check every cell without running.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct OverrideArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replaces the config's seed list; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Replaces the config's strategy list; repeatable.
    #[arg(long = "strategy")]
    pub strategies: Vec<String>,
    /// Simulated seconds per run.
    #[arg(long)]
    pub duration: Option<f64>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            seeds: a.seeds,
            strategies: a.strategies,
            duration: a.duration,
            out: a.out,
        }
    }
}

/// Executes one command, printing the files it wrote. `env_seeds` is the
/// value of `ORTHOSIM_SEED`, if set.
pub fn execute(cli: Cli, env_seeds: Option<&str>) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let exp = load_experiment(&config, &overrides.into(), env_seeds)?;
            let out = commands::run_experiment(&exp)?;
            for p in out.metrics.iter().chain(&out.summaries) {
                println!("wrote {}", p.display());
            }
        }
        Command::Motivating { config, overrides } => {
            let opts = commands::motivating_options(config.as_deref(), &overrides.into(), env_seeds)?;
            for p in commands::run_motivating(&opts)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Plot { inputs, out } => {
            plot::plot_files(&inputs, &out)?;
            println!("wrote {}", out.display());
        }
        Command::ValidateConfig { config, overrides } => {
            let exp = load_experiment(&config, &overrides.into(), env_seeds)?;
            println!("{}: ok, {} cells", config.display(), exp.cells.len());
        }
    }
    Ok(())
}
