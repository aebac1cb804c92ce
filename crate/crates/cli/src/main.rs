//! `tailrisk` command-line tool.
//!
//! Exit status is 0 on success, 1 when the library rejects the inputs and 2 on usage
//! errors. Every failure prints one line `ERROR:<category>:<message>` to stderr.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use clap::error::ErrorKind;

use args::Cli;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(tailrisk::Error),
}

impl From<tailrisk::Error> for CliError {
    fn from(e: tailrisk::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn line(&self) -> String {
        let (category, msg) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Lib(e) => (e.category(), e.to_string()),
        };
        format!("ERROR:{category}:{}", msg.replace('\n', " "))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse_from(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let msg = first.trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(msg).line());
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
