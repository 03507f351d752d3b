mod commands;
mod error;
mod manifest;
mod opts;

use std::process::ExitCode;

use clap::Parser;

use error::{CliError, CliResult};
use opts::{read_config, Cli, Command};

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::Train(flags) => {
            let file = config.map(read_config).transpose()?.unwrap_or_default();
            commands::train(flags.merge(file))
        }
        Command::Denoise(flags) => {
            let file = config.map(read_config).transpose()?.unwrap_or_default();
            commands::denoise(flags.merge(file))
        }
        Command::Eval(flags) => {
            let file = config.map(read_config).transpose()?.unwrap_or_default();
            commands::eval(flags.merge(file))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("cubetree: {}", line.trim_start_matches("error: "));
            return ExitCode::from(error::EXIT_USAGE as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cubetree: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
