use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("cannot parse {what} from {origin} (line {line}, column {column}): {message}")]
    Parse {
        what: &'static str,
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] chancert::Error),
}

impl CliError {
    /// 2 for bad input, 3 for solver failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(chancert::Error::Solver(_)) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
