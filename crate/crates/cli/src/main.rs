use std::process::ExitCode;

use clap::Parser;
use orthosim_cli::config::SEED_ENV;
use orthosim_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_seeds = std::env::var(SEED_ENV).ok();
    match execute(cli, env_seeds.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
