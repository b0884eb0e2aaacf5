use std::io;
use std::process::ExitCode;

use atensor_cli::app::{configure_threads, execute, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = configure_threads().and_then(|_| execute(&cli, &mut io::stdout().lock(), &mut io::stderr().lock()));
    match run {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("atensor: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
