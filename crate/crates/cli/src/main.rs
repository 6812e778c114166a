use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match scenewright_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // exit 2 is reserved for partial line failures
            return ExitCode::from(if e.use_stderr() { scenewright_cli::EXIT_FATAL } else { scenewright_cli::EXIT_OK });
        }
    };
    ExitCode::from(scenewright_cli::run(cli))
}
