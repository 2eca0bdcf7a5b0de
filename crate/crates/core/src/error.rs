use std::path::PathBuf;

/// Errors raised anywhere in the training stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid user-provided configuration. `key` names the offending field.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// A NaN or infinity appeared where a finite value is required.
    #[error("numeric overflow in {context}")]
    NumericOverflow { context: String },

    /// A gradient statistic is undefined (zero variance or zero magnitude).
    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    /// Reference vector has zero norm, so a relative error is undefined.
    #[error("degenerate reference: reference vector has zero norm")]
    DegenerateReference,

    /// API misuse (mismatched lengths, foreign tape, zero step counter, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn overflow(context: impl Into<String>) -> Self {
        Error::NumericOverflow {
            context: context.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
