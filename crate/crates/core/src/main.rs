use std::process::ExitCode;

use clap::Parser;
use slzeros::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slzeros {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
