mod args;
mod config;
mod error;
mod run;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    // Parse failures exit with status 2 and name the offending flag.
    let cli = args::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run::execute(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
