use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("output data is constant; fit percentage is undefined")]
    ConstantOutput,

    #[error("augmented system is not controllable (condition estimate {0:.3e})")]
    Uncontrollable(f64),

    #[error(
        "position is outside the workspace: radial error {radial:.3e} m, \
         excess of the elbow cosine {elbow:.3e}"
    )]
    Unreachable { radial: f64, elbow: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("{path}: line {line}: {message}")]
    Dataset {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
