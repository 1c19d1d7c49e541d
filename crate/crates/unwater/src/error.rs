//! Crate-wide error type.
//!
//! Numerical failures (non-finite values, singular matrices, domain
//! violations) are errors, never silent states. Each CLI failure class maps
//! to a distinct exit code (see `main.rs`).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({lhs:?} vs {rhs:?})")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    BadInput { op: &'static str, msg: String },

    #[error("{op}: non-positive input where a positive value is required")]
    Domain { op: &'static str },

    #[error("{ctx}: produced non-finite values")]
    NonFinite { ctx: String },

    #[error("not invertible: {msg}")]
    NotInvertible { msg: String },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("format error in {path} at byte {offset}: {msg}")]
    Format {
        path: String,
        offset: usize,
        msg: String,
    },

    #[error("checkpoint error: {msg}")]
    Checkpoint { msg: String },

    #[error("tolerance exceeded in {check}: {detail}")]
    Tolerance { check: String, detail: String },

    #[error("training aborted: {msg}")]
    TrainAbort { msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn non_finite(ctx: impl Into<String>) -> Self {
        Error::NonFinite { ctx: ctx.into() }
    }

    pub fn bad_input(op: &'static str, msg: impl Into<String>) -> Self {
        Error::BadInput { op, msg: msg.into() }
    }
}
