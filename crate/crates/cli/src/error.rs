//! Command errors mapped onto the CLI exit-code scheme:
//! 0 success, 1 partial/failed, 2 config, 3 endpoint capability,
//! 4 estimation impossible.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad config file, flags, or malformed input files (exit 2).
    Config(String),
    /// The endpoint cannot serve this workload at all (exit 3).
    Capability(String),
    /// Estimation impossible on this input, e.g. all traces degraded (exit 4).
    Estimation(String),
    /// Partial results were produced; an error manifest exists (exit 1).
    Partial(String),
    /// Run failed outright (exit 1).
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Partial(_) | CliError::Failure(_) => 1,
            CliError::Config(_) => 2,
            CliError::Capability(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }

    pub fn config(err: impl fmt::Display) -> Self {
        CliError::Config(err.to_string())
    }

    pub fn failure(err: impl fmt::Display) -> Self {
        CliError::Failure(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Capability(m) => write!(f, "endpoint capability error: {m}"),
            CliError::Estimation(m) => write!(f, "estimation impossible: {m}"),
            CliError::Partial(m) => write!(f, "partial failure: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<bfkit_client::ClientError> for CliError {
    fn from(e: bfkit_client::ClientError) -> Self {
        if e.is_capability() {
            CliError::Capability(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}
