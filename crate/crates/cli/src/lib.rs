//! `spa` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags, invalid
//! configuration), 2 on data errors (unreadable or malformed inputs). Every
//! diagnostic goes to stderr prefixed with a stable code such as `E_USAGE`
//! or `E_TRUNCATED`.

mod args;
mod commands;
mod config;
mod manifest;
mod render;

use std::ffi::OsString;

use clap::{CommandFactory, FromArgMatches};
use spa_core::SpaError;

pub use args::Cli;
pub use manifest::RunManifest;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(SpaError),
}

impl From<SpaError> for Failure {
    fn from(e: SpaError) -> Self {
        match e {
            SpaError::Config(msg) => Failure::Usage(msg),
            other => Failure::Data(other),
        }
    }
}

impl Failure {
    fn report(&self) -> i32 {
        match self {
            Failure::Usage(msg) => {
                eprintln!("E_USAGE: {msg}");
                1
            }
            Failure::Data(e) => {
                eprintln!("{}: {e}", e.code());
                2
            }
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match parse_and_run(argv) {
        Ok(()) => 0,
        Err(f) => f.report(),
    }
}

fn parse_and_run(argv: Vec<OsString>) -> Result<(), Failure> {
    let argv = config::expand(argv)?;
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            let text = e.render().to_string();
            let text = text.trim_end().trim_start_matches("error: ");
            return Err(Failure::Usage(text.to_owned()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(e.to_string()))?;
    let (sub_name, sub) = matches.subcommand().expect("subcommand is required");
    let echo = config::echo(sub, sub_name);

    let jobs = cli.command.common().jobs;
    if jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {jobs:?} workers: {e}")))?;
    pool.install(|| commands::dispatch(&cli.command, echo))
}
