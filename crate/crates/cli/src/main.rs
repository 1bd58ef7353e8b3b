use std::process::ExitCode;

use clap::Parser;
use extphase_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut code = 0;
    for outcome in run(&cli) {
        print!("{}", outcome.report);
        if let Err(e) = &outcome.result {
            eprintln!("error: {e}");
        }
        code = code.max(outcome.exit_code());
    }
    ExitCode::from(code)
}
