use std::process::ExitCode;

use clap::Parser;
use sinotv::cli::{exit_code, run, Cli, EXIT_NOT_CONVERGED};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) if outcome.converged => ExitCode::SUCCESS,
        Ok(outcome) => {
            eprintln!(
                "sinotv: solver did not converge; results written to {}",
                outcome.out.display()
            );
            ExitCode::from(EXIT_NOT_CONVERGED as u8)
        }
        Err(err) => {
            eprintln!("sinotv: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
