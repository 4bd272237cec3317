use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dctchan_cli::{execute, load, CliError, Command, Overrides};

#[derive(Parser)]
#[command(name = "dctchan", version, about = "Seeded DCT-neuron channel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Overrides the config seed (and the SEED environment variable).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the progress line on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Run a nonlinearity × SNR sweep over the config's `[sweep]` lists.
    Sweep { config: PathBuf },
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("SEED") {
        Ok(s) => {
            s.trim().parse().map(Some).map_err(|_| CliError::Config(format!("SEED: not an unsigned integer: {s:?}")))
        }
        Err(_) => Ok(None),
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let (cmd, path) = match cli.command {
        Cmd::Run { config } => (Command::Run, config),
        Cmd::Sweep { config } => (Command::Sweep, config),
    };
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    let cfg = load(&path, cmd, &Overrides { seed, out: cli.out })?;
    let dir = execute(&cfg)?;
    if !cli.quiet {
        eprintln!("{} (seed {}) -> {}", cfg.experiment.name(), cfg.seed, dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dctchan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
