//! Command-line harness for reproducible streamcore runs.
//!
//! The `classify`, `fairness`, `anomaly` and `compare` subcommands resolve a
//! complete run configuration from flags, execute it over a single pass of
//! the chosen source and write CSV series and JSON summaries into `--out`.
//! Every file embeds the resolved configuration. Repeating an invocation with
//! the same flags rewrites identical bytes; wall-clock columns stay zero
//! unless `--timing` is given.

mod args;
mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

pub use args::{AnomalyArgs, ClassifyArgs, Cli, Command, CompareArgs, DataArgs};
pub use config::{parse_sensitive, DataSpec, ModelSpec, TreeParams};

/// Environment variable capping the number of parallel `compare` runs.
pub const THREADS_ENV: &str = "STREAMCORE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] streamcore::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("run stopped after {completed} instances: {message}")]
    Incomplete { completed: u64, message: String },
    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },
}

/// Parses `args` (program name first) and executes the subcommand.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    commands::execute(cli.command)
}
