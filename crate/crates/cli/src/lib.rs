//! `flim` command-line front end.
//!
//! Every subcommand reads an optional TOML config file (`--config`), lets
//! flags override its keys, and writes the effective configuration with the
//! hashes of its inputs and outputs to a manifest next to its main output.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{Manifest, MANIFEST_SUFFIX};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error(transparent)]
    Core(#[from] flim_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(flim_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "flim",
    version,
    about = "Fluorescence lifetime estimation toolkit"
)]
struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// TOML file with the subcommand's settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled timestamp dataset.
    Simulate(commands::simulate::Args),
    /// Train a recurrent estimator on a dataset.
    Train(commands::train::Args),
    /// Run one estimator over a dataset split.
    Eval(commands::eval::Args),
    /// Reproduce the comparison tables or precision sweeps.
    Bench(commands::bench::Args),
    /// Cramér–Rao bound and Monte Carlo precision sweep.
    Crlb(commands::crlb::Args),
    /// Convert float weights to fixed point.
    Quantize(commands::quantize::Args),
    /// Replay a photon stream through the four-unit readout model.
    Pipeline(commands::pipeline::Args),
    /// Check artifact checksums and the hashes linking them.
    Verify(commands::verify::Args),
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("flim: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    let file = cli.config.as_deref();
    pool.install(|| match &cli.command {
        Command::Simulate(a) => commands::simulate::run(a, file),
        Command::Train(a) => commands::train::run(a, file),
        Command::Eval(a) => commands::eval::run(a, file),
        Command::Bench(a) => commands::bench::run(a, file),
        Command::Crlb(a) => commands::crlb::run(a, file),
        Command::Quantize(a) => commands::quantize::run(a, file),
        Command::Pipeline(a) => commands::pipeline::run(a, file),
        Command::Verify(a) => commands::verify::run(a, file),
    })
}
