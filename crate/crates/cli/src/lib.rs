//! Library side of the `cde` command: configuration, preprocessing, the three
//! subcommands and the synthetic analysis fixture.

pub mod commands;
pub mod config;
pub mod fixture;
pub mod preprocess;

use std::fmt;

use cde_core::CdeError;

/// Exit 2 for configuration or schema problems, 1 for runtime failures.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Schema(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Classifies a library error raised while reading or shaping input data.
    pub fn from_input(e: CdeError) -> Self {
        match e {
            CdeError::UnknownColumn(_)
            | CdeError::Csv(_)
            | CdeError::InvalidData(_)
            | CdeError::Dimension(_)
            | CdeError::InvalidTerm { .. }
            | CdeError::InvalidCandidate(_)
            | CdeError::Config(_) => CliError::Schema(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Schema(m) => write!(f, "input error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CdeError> for CliError {
    fn from(e: CdeError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
