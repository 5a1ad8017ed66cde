//! Command-line front end: `simulate`, `fit`, `oracle` and `report`.
//!
//! Exit codes: 0 success, 1 usage, config or I/O error, 2 data error,
//! 3 numeric failure.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use config::ConfigFile;
pub use error::CliError;

/// Parses `argv` (program name first) and runs the subcommand, returning
/// the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &file, cli.verbose, stdout),
        Command::Fit(a) => commands::fit(a, &file, cli.verbose, stdout, stderr),
        Command::Oracle(a) => commands::oracle(a, &file, stdout),
        Command::Report(a) => commands::report(a, &file, stdout),
    }
}
