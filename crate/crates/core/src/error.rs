//! Error taxonomy shared by the library.

use thiserror::Error;

/// Errors produced by integration, fitting, ensemble construction, and
/// diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// Model or integrator parameters fail validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A state handed to an integrator or closure contains NaN/Inf.
    #[error("non-finite state at t = {time}")]
    InvalidState { time: f64 },

    /// A trajectory exceeded the blow-up threshold.
    #[error("trajectory diverged at t = {time} (max |component| = {max_abs:.3e})")]
    Divergence { time: f64, max_abs: f64 },

    /// A least-squares design matrix has (numerically) deficient rank.
    #[error("rank-deficient design matrix in {context}")]
    RankDeficient { context: &'static str },

    /// A fit that needs residual spread received (numerically) constant data.
    #[error("zero-variance residuals in {context}")]
    ZeroVariance { context: &'static str },

    /// Flow training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    /// The monotone tail transform could not be inverted.
    #[error("tail-transform inversion failed for y = {y:.6e}")]
    InversionFailed { y: f64 },

    /// Histogram comparison on differing bin edges.
    #[error("mismatched histogram edges: {0}")]
    MismatchedEdges(String),

    /// Paired series/trajectories whose shapes or time axes disagree.
    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    /// A diagnostic was asked for more data than the trajectory holds.
    #[error("trajectory too short: {needed} samples needed, {got} available")]
    TooShort { needed: usize, got: usize },

    /// An operation that requires a specific ensemble layout got the wrong one.
    #[error("unsupported ensemble layout: {0}")]
    UnsupportedLayout(String),

    /// Empty or otherwise degenerate input where statistics are undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Underlying I/O failure while persisting or loading artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON artifact (checkpoint, sidecar, summary).
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed table artifact (dataset or diagnostic CSV).
    #[error("csv parse error: {0}")]
    CsvParse(String),
}
