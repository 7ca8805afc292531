use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A raw sample block contained NaN or infinity.
    #[error("{path}: non-finite sample at byte offset {offset} (subject {subject}, direction {direction}, sample {sample})")]
    NonFinite {
        path: PathBuf,
        offset: u64,
        subject: String,
        direction: usize,
        sample: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular or rank-deficient system: {0}")]
    Singular(String),

    #[error("degenerate coordinate: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("off-grid direction unsupported by {method}: ({az_deg}, {el_deg}) is not a measured direction")]
    OffGrid {
        az_deg: f64,
        el_deg: f64,
        method: &'static str,
    },

    #[error("missing data: {0}")]
    Missing(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than internal failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Divergence { .. })
    }
}
