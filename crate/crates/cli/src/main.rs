use std::process::ExitCode;

use clap::Parser;
use mewls_cli::{Cli, CliError, ErrorClass, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => err.exit(),
        Err(err) => {
            let usage =
                CliError::usage(err.kind().to_string() + ": " + &first_line(&err.to_string()));
            eprintln!("{}", usage.to_json());
            return ExitCode::from(usage.exit_code());
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match mewls_cli::run(&cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(message)) => {
            let err = CliError::new(ErrorClass::Partial, message);
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code())
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code())
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .next()
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_string()
}
