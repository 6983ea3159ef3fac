use std::path::PathBuf;

use sieve_core::SieveError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", file.display())]
    Schema {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("incomplete panel at subject {subject}, task {task}: no response recorded")]
    IncompletePanel { subject: String, task: String },

    #[error(transparent)]
    Core(#[from] SieveError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn schema(file: &std::path::Path, line: u64, message: impl Into<String>) -> Self {
        CliError::Schema {
            file: file.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => core_exit_code(e),
            _ => EXIT_USAGE,
        }
    }
}

/// Bad inputs exit with 2; failures of the numerics on valid inputs exit with 3.
fn core_exit_code(e: &SieveError) -> i32 {
    use SieveError::*;
    match e {
        AtRow { source, .. } => core_exit_code(source),
        IllConditioned { .. }
        | Leverage { .. }
        | Identification(_)
        | Asymmetric(_)
        | NotPsd(_)
        | NonFinite(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}
