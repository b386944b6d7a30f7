//! Command-line front end for circaphase: `simulate`, `predict`, `rhythm`,
//! `evaluate` and `compare`. Every subcommand is a pure function of its
//! input files, its configuration and the root seed.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::Path;

pub mod commands;
pub mod config;
pub mod tables;

pub use config::RunConfig;

/// Error reported on a single line as `error[<kind>]: <message>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new("config", message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new("io", format!("io error on {}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {one_line}", self.kind)
    }
}

impl std::error::Error for CliError {}

impl From<circaphase::Error> for CliError {
    fn from(e: circaphase::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}
