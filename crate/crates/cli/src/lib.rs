//! Command implementations behind the `lgcp` binary.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 data, 4 numerical
//! failure.

pub mod commands;
pub mod config;

use std::fmt;

pub use commands::{
    cmd_basis, cmd_evaluate, cmd_fit, cmd_simulate, cmd_summarize, Estimator, EvaluateReport, EvaluateRequest,
    FitReport, Protocol, SimulateReport, SummaryReport, SummaryRequest,
};
pub use config::Config;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<lgcp_core::Error> for CliError {
    fn from(e: lgcp_core::Error) -> Self {
        use lgcp_core::Error as E;
        let code = match e {
            E::InvalidParameter(_) | E::Dimension(_) | E::Config(_) => EXIT_USAGE,
            E::Input(_) | E::Data(_) | E::Io(_) | E::Csv(_) | E::Json(_) => EXIT_DATA,
            E::Numerical { .. } | E::Envelope { .. } => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}
