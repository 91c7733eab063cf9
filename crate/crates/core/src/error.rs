use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate stratification: {distinct} distinct values cannot form {k} folds")]
    DegenerateStratification { distinct: usize, k: usize },

    #[error("global fold {fold} is empty")]
    EmptyFold { fold: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used on the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Numeric(_) => "numeric-error",
            Error::DegenerateStratification { .. } => "degenerate-stratification",
            Error::EmptyFold { .. } => "empty-fold",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::Parse { .. } => "parse-error",
            Error::Config(_) => "config-error",
            Error::Io(_) => "io-error",
            Error::Csv(_) => "csv-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
