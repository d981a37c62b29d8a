use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    pgpe_cli::main_with(pgpe_cli::Cli::parse())
}
