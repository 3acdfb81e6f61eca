use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use okstab::cli::{run, Args};

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // usage errors must not collide with the "unstable" status 2
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("okstab {}: {e}", args.command.name());
            ExitCode::from(1)
        }
    }
}
