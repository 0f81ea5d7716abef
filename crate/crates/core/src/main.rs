use std::process::ExitCode;

use clap::Parser;
use noisekit::cli::{report_error, run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", report_error(&e));
            ExitCode::FAILURE
        }
    }
}
