use std::process::ExitCode;

use clap::Parser;
use situate::commands::{main_with, Cli};

fn main() -> ExitCode {
    main_with(Cli::parse())
}
