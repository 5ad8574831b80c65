use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("nonlinearity returned non-finite value {value} at grid point xi = {xi}")]
    NonFiniteNonlinearity { xi: f64, value: f64 },

    #[error("divergence at step {step}: state contains a non-finite coefficient")]
    Divergence { step: usize },

    #[error("grid incompatibility: {0}")]
    Grid(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
