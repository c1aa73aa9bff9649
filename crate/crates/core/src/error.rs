use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("input is empty: {0}")]
    EmptyInput(String),

    #[error("degenerate cloud: bounding-box diagonal is zero")]
    ZeroDiagonal,

    #[error("parse error in {}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("optimization diverged at iteration {iteration}: non-finite loss")]
    Diverged {
        iteration: usize,
        /// Last parameters that produced a finite loss, with the history up to that point.
        last_finite: Box<crate::optim::FitParams>,
        history: Vec<crate::optim::LossBreakdown>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
