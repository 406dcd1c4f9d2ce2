use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite loss (lr = {lr}, epoch = {epoch}, batch = {batch})")]
    NonFiniteLoss { lr: f64, epoch: usize, batch: usize },

    #[error("non-finite loss")]
    NonFinite,

    #[error("{0}")]
    Numerical(String),

    #[error("insufficient episodes: need at least 3, got {0}")]
    InsufficientEpisodes(usize),

    #[error("degenerate label distribution: only class {0} present")]
    DegenerateLabels(u8),

    #[error("split leakage: driver was trained on {trained_on}, refusing to label {requested} (pass --allow-leakage to override)")]
    SplitLeakage { trained_on: String, requested: String },

    #[error("missing artifact: {what} ({})", path.display())]
    MissingArtifact { what: String, path: PathBuf },

    #[error("stale artifact {}: found {found}, expected {expected}; {hint}", path.display())]
    StaleArtifact {
        path: PathBuf,
        found: String,
        expected: String,
        hint: String,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact { .. } | Error::StaleArtifact { .. } => 3,
            Error::NonFiniteLoss { .. } | Error::NonFinite | Error::Numerical(_) => 4,
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 3,
            _ => 2,
        }
    }
}
