use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SinetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SinetError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("string {string:?} has length {len}, exceeding max_len {max_len}")]
    Overflow {
        string: String,
        len: usize,
        max_len: usize,
    },

    #[error("unknown character {character:?} at offset {offset}")]
    UnknownCharacter { character: char, offset: usize },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("MAPE undefined: a target has magnitude below 1e-9 (mse {mse}, mae {mae})")]
    MapeUndefined { mse: f64, mae: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SinetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Self::Format {
            offset,
            message: message.into(),
        }
    }

    /// Process exit code for this error class: 2 usage, 3 data, 4 numeric, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Overflow { .. }
            | Self::UnknownCharacter { .. }
            | Self::Format { .. }
            | Self::Corruption(_)
            | Self::Data(_)
            | Self::Compatibility(_)
            | Self::Json(_) => 3,
            Self::Dimension(_)
            | Self::Rank(_)
            | Self::Empty(_)
            | Self::NonFinite(_)
            | Self::Domain(_)
            | Self::MapeUndefined { .. } => 4,
            Self::Io { .. } => 5,
        }
    }
}
