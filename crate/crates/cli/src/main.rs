//! `flowguard`: one binary for the whole detection pipeline.
//!
//! Exit status is 0 on success, 1 on a usage error (bad or missing flags,
//! out-of-range settings, an output that would overwrite an input) and 2 on
//! a data or contract error (unreadable input, corrupt model, schema
//! mismatch and so on).

mod args;
mod commands;
mod meta;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<UsageError>()) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage errors with status 2; this tool reserves 2
            // for data errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
