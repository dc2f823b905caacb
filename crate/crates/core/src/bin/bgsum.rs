use std::io::{self, Write};
use std::process::ExitCode;

use bgsum::cli::{error_line, run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    match run(&cli, &mut input, &mut out, &mut err) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            let _ = writeln!(err, "{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
