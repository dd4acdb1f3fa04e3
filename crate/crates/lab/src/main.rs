use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = adamb_lab::cli::Cli::parse();
    adamb_lab::cli::init_logging(cli.quiet, cli.verbose);
    match adamb_lab::cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
