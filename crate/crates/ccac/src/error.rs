//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset I/O, fitting, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A dataset file could not be parsed; `line` is 1-based.
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A vector or layer had the wrong length for the operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// The metric is undefined on the given inputs (e.g. AUROC with a
    /// single class present).
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// A calibrator could not be fitted on the given data.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Training produced a non-finite loss or non-finite activations.
    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Diverged {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    /// Equal-mass binning could not produce strictly ascending, non-empty
    /// bins from the given confidences.
    #[error("degenerate bins: {0}")]
    DegenerateBins(String),

    /// A model file held a different calibrator kind than the operation
    /// requires.
    #[error("transfer requires a {expected} model, found \"{found}\"")]
    ModelKind {
        expected: &'static str,
        found: String,
    },

    /// A serialized artifact declared an unsupported format version.
    #[error("unsupported format version {found} (supported: {supported})")]
    FormatVersion { found: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
