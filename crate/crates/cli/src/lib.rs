//! Command implementations behind the `teamplan` binary.

pub mod commands;
pub mod config;
pub mod serve;

pub use config::Config;

use std::fmt;

/// A command failure and the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Missing inputs, bad configuration, busy ports and refused overwrites.
pub fn input_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

pub fn runtime_error(message: impl fmt::Display) -> CliError {
    CliError {
        code: 1,
        message: message.to_string(),
    }
}

impl From<teamplan::Error> for CliError {
    fn from(e: teamplan::Error) -> Self {
        match e {
            teamplan::Error::InvalidConfig(_) => input_error(e.to_string()),
            _ => runtime_error(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        runtime_error(e)
    }
}
