use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error at row {row}, column '{column}': {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },
    #[error("empty data: {0}")]
    Empty(String),
    #[error("index {index} out of bounds (len {len})")]
    Bounds { index: usize, len: usize },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("level '{0}' was not seen when the encoder was fitted")]
    UnseenLevel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("model file error: {0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse grouping used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Dimension(_) => ErrorClass::Validation,
            Error::Schema(_)
            | Error::Data { .. }
            | Error::Empty(_)
            | Error::Bounds { .. }
            | Error::UnseenLevel(_)
            | Error::Model(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::Numeric(_) | Error::Fit(_) | Error::Domain(_) | Error::Fixture(_) => {
                ErrorClass::Numeric
            }
        }
    }
}
