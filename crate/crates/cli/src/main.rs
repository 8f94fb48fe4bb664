mod args;
mod artifacts;
mod commands;
mod config;
mod error;
mod fsio;

use std::io::IsTerminal;
use std::process::ExitCode;

use clap::Parser;
use tracing::Level;

use crate::args::Cli;
use crate::config::FileConfig;

fn init_logging(json: bool) {
    let builder = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(Level::INFO)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time();
    if json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.json_logs);
    let result = FileConfig::load(cli.config.as_deref()).and_then(|file| commands::run(cli.command, &file));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(code = e.exit_code(), "{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
