//! Driver-level errors and their process exit codes.

use std::fmt;

/// Errors surfaced by the experiment driver. Each maps to a stable exit
/// code so scripts can distinguish configuration mistakes from numerical
/// failures.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, missing input artifacts, or I/O failures while
    /// loading them. Exit code 2.
    Config(String),
    /// Numerical failure: divergence of an integration, failed training,
    /// or a degenerate statistic. Exit code 3.
    Numerical(String),
    /// The run finished but more than the tolerated fraction of ensemble
    /// members failed. Exit code 4.
    PartialFailure(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::PartialFailure(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::PartialFailure(msg) => write!(f, "partial failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Map a library error to the driver taxonomy: anything that is clearly
/// a numerical/runtime failure keeps exit code 3; everything else is
/// treated as a configuration/input problem.
impl From<l96ens::Error> for CliError {
    fn from(e: l96ens::Error) -> Self {
        use l96ens::Error as E;
        match &e {
            E::Divergence { .. }
            | E::InvalidState { .. }
            | E::TrainingDiverged { .. }
            | E::InversionFailed { .. }
            | E::RankDeficient { .. }
            | E::ZeroVariance { .. }
            | E::Degenerate(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}
