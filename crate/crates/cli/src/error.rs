use std::fmt;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// A failure carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERIC, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ladder_core::Error> for CliError {
    fn from(e: ladder_core::Error) -> Self {
        use ladder_core::Error::*;
        let code = match &e {
            Numeric(_) => EXIT_NUMERIC,
            Io(_) => EXIT_IO,
            Input(_) | Shape(_) | Parse { .. } | Format(_) | Checksum(_) | MissingFile(_) | Json(_) => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}
