//! Error types shared across the core library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("group assignment error: {0}")]
    Groups(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power iteration did not converge within {max_iter} iterations (last residual {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error("non-finite value in {context}: {detail}")]
    NonFinite { context: String, detail: String },

    #[error("NaN gradient in parameter block '{block}'")]
    NanGradient { block: String },

    #[error(
        "training aborted: non-finite loss at epoch {epoch}, batch {batch} (parameter norms: {param_norms})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norms: String,
    },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("fingerprint mismatch for {what}: expected {expected}, got {actual}")]
    FingerprintMismatch {
        what: String,
        expected: String,
        actual: String,
    },

    #[error("malformed {format} file {path}: {message}")]
    Format {
        format: String,
        path: String,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
