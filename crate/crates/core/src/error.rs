use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes for an operation.
    #[error("dimension error in {op}: {detail} (shapes: {shapes:?})")]
    Dimension {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
        detail: String,
    },

    /// Input values violate an operation's precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Operation called in the wrong lifecycle state (e.g. apply before fit).
    #[error("state error: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("synchronization error: {0}")]
    Sync(String),

    #[error("parse error in {}:{line}: {detail}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        detail: String,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    /// Model used in a mode that the call does not allow.
    #[error("mode error: {0}")]
    Mode(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("report error: {0}")]
    Report(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, shapes: &[&[usize]], detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Mode(_) => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}
