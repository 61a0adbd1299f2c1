use thiserror::Error;

/// Error type shared by every module of this crate.
#[derive(Error, Debug)]
pub enum Error {
    /// An input lies outside the domain of an operation (e.g. a latitude
    /// outside the Web-Mercator band).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameters or configuration (non-invertible transform,
    /// out-of-range config value, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input document. `offset` is a byte offset into the document.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Malformed binary or structured container.
    #[error("format error in `{field}`: {message}")]
    Format { field: String, message: String },

    /// A metric was asked to summarize an input it is undefined on.
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
