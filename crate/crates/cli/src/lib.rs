//! Batch experiment runner for `dctchan`: reads a TOML config, runs a seeded
//! experiment and writes `summary.json`, `trace.csv`, `curves.csv` and, for
//! sweeps, `sweep.csv`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::Config;
pub use error::CliError;
pub use output::RunOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// The experiment named in the config.
    Run,
    /// A nonlinearity × SNR sweep, whatever the config's `experiment`.
    Sweep,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Reads and validates `path` for `cmd`, then applies `ov`.
pub fn load(path: &Path, cmd: Command, ov: &Overrides) -> Result<Config, CliError> {
    let src = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let label = path.display().to_string();
    let mut cfg = match cmd {
        Command::Run => Config::parse(&src, &label)?,
        Command::Sweep => Config::parse_sweep(&src, &label)?,
    };
    if let Some(seed) = ov.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &ov.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Runs `cfg` and writes its files; returns the output directory.
pub fn execute(cfg: &Config) -> Result<PathBuf, CliError> {
    let out = experiments::run(cfg)?;
    output::write_all(&cfg.output_dir, &out, cfg.output.gnuplot)?;
    Ok(cfg.output_dir.clone())
}
