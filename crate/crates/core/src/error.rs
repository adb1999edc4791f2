use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// The variants map onto the categories the command-line harness reports
/// (`input`, `numeric`, `budget`, `infeasible`, `io`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("search budget exceeded: {0}")]
    Budget(String),

    #[error("infeasible at this scale: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Short machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Numeric(_) => "numeric",
            Error::Budget(_) => "budget",
            Error::Infeasible(_) => "infeasible",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
