use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod output;
mod run;

use error::{code, CliError};

#[derive(Debug, Parser)]
#[command(name = "modlab", version, about = "Run modulation-space and NLS experiments from config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Replaces the seed of randomized data.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long, env = "MODLAB_THREADS")]
        threads: Option<usize>,
    },
}

fn run(config: PathBuf, out: PathBuf, seed: Option<u64>, threads: Option<usize>) -> Result<bool, CliError> {
    let loaded = config::load(&config, seed)?;
    if let Some(k) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Parse(format!("thread pool: {e}")))?;
    }
    let outcome = run::execute(&loaded.experiment, &loaded.base)?;
    output::write_all(&out, loaded.experiment.name(), loaded.experiment.resolved(), &outcome)?;
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, out, seed, threads } = cli.command;
    match run(config, out, seed, threads) {
        Ok(true) => ExitCode::from(code::OK),
        Ok(false) => {
            eprintln!("modlab: pass criteria not met");
            ExitCode::from(code::CRITERIA_FAILED)
        }
        Err(e) => {
            eprintln!("modlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
