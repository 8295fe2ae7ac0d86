use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    udi_cli::run(udi_cli::Cli::parse())
}
