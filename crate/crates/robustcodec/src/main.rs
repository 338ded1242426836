//! Binary entry point for the workbench CLI.

use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::init();
    robustcodec::cli::main_entry(std::env::args().collect())
}
