use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(volcal_cli::run(volcal_cli::Cli::parse()))
}
