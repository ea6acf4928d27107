//! Command-line front end: configuration, artifacts and the `verify` report.

pub mod cache;
pub mod commands;
pub mod config;
pub mod fieldio;
pub mod output;
pub mod plot;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    /// `--help` or `--version`; the text goes to stdout.
    #[error("{0}")]
    Help(String),
    #[error(transparent)]
    Core(#[from] logsp::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status:
/// 0 on success, 1 on a failed check or runtime error, 2 on usage errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let result = config::parse_config(args).and_then(|cfg| commands::run(&cfg));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(CliError::Help(text)) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
