use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match unzipseq::run(unzipseq::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
