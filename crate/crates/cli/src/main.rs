use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = qrc_sensor::Cli::parse();
    match qrc_sensor::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
