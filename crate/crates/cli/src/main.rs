use std::process::ExitCode;

use clap::Parser;
use persona_sim_cli::{execute, print_ingest, Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Outcome::Ingest(summary)) => {
            print_ingest(&summary);
            ExitCode::SUCCESS
        }
        Ok(Outcome::Run(dir)) => {
            println!("run directory: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
