use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty roster: at least one subject is required")]
    EmptyRoster,

    #[error("walk of {duration:.3} s is shorter than the {minimum:.3} s needed for two gait cycles")]
    DurationTooShort { duration: f64, minimum: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("no target detected in any frame")]
    NoTarget,

    #[error("corrupt file {}: checksum mismatch (expected {expected}, found {found})", path.display())]
    Corruption {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("orchestration error: {0}")]
    Orchestration(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Corruption { .. } | Error::Integrity(_) => 3,
            Error::Numerical(_) => 4,
            _ => 1,
        }
    }
}
