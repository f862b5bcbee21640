//! `riemann-ineq`: verification, constant estimation and convergence studies.
//!
//! Exit codes: 0 success, 1 a toleranced check failed, 2 configuration error.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use riemann_ineq::Error;

use args::{Cli, Command, RunConfig};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, specs or files; exit 2.
    Config(String),
    /// Failed checks, one line each; exit 1.
    Check(Vec<String>),
}

impl Failure {
    /// Spec and search errors are configuration errors; the rest arise while
    /// evaluating and count as check failures.
    pub fn from_core(e: Error) -> Failure {
        match e {
            Error::InvalidManifold(_)
            | Error::InvalidFamily(_)
            | Error::NonPositiveFamily { .. }
            | Error::InvalidGrid(_)
            | Error::InvalidSearch(_)
            | Error::IndexOutOfRange { .. } => Failure::Config(e.to_string()),
            other => Failure::Check(vec![other.to_string()]),
        }
    }

    pub fn io(context: &str, e: impl std::fmt::Display) -> Failure {
        Failure::Config(format!("{context}: {e}"))
    }
}

fn run(command: &Command) -> Result<(), Failure> {
    let config = RunConfig::resolve(command)?;
    if let Some(jobs) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start {jobs} workers: {e}")))?;
    }
    match command {
        Command::Verify(_) => commands::verify(&config),
        Command::EstimateC(_) => commands::estimate(&config),
        Command::Convergence(_) => commands::convergence(&config),
        Command::ListManifolds(_) => {
            commands::list_manifolds();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{}: error: {msg}", cli.command.name());
            ExitCode::from(2)
        }
        Err(Failure::Check(lines)) => {
            for line in lines {
                eprintln!("FAIL {line}");
            }
            ExitCode::from(1)
        }
    }
}
