use std::process::ExitCode;

use clap::Parser;
use qcarnot_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match qcarnot_cli::init_threads().and_then(|()| qcarnot_cli::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qn: {f}");
            ExitCode::from(f.code)
        }
    }
}
