use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A structured-text or binary input failed to parse. `field` names the
    /// offending element (a header field, a calibration key, a line).
    #[error("parse error in {source_name} ({field}){}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        source_name: String,
        field: String,
        line: Option<usize>,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset ingestion error: {0}")]
    Ingestion(String),

    #[error("no valid ground-truth pixels in evaluation region")]
    EmptyGroundTruth,

    #[error("non-finite value in loss term `{term}` at step {step}")]
    NonFinite { term: String, step: u64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(
        source_name: impl Into<String>,
        field: impl Into<String>,
        line: Option<usize>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            field: field.into(),
            line,
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
