use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or data set violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{what} = {value} exceeds the supported maximum {max}")]
    OutOfBounds {
        what: &'static str,
        value: usize,
        max: usize,
    },

    /// A statistic is not defined for the given input, e.g. a correlation
    /// with a constant operand.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Whether the failure is attributable to the caller's configuration or
    /// input data rather than the environment.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::OutOfBounds { .. }
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::UndefinedStatistic(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Serialization(format!("{other:?}")),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Serialization(e.to_string())
        }
    }
}
