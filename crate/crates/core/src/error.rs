use thiserror::Error;

/// Errors raised by kernel construction, model fitting and the test pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of user input.
    ///
    /// The CLI maps these to exit code 2 and everything else to exit code 1.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NonFinite(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
