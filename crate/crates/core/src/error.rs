use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Location of a problem inside a delimited input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    /// 1-based line number in the source file.
    pub line: u64,
    pub column: Option<String>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.column {
            Some(col) => write!(f, "line {}, column '{}'", self.line, col),
            None => write!(f, "line {}", self.line),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cohort: issued count is zero")]
    EmptyCohort,

    #[error("horizon unobserved: no cohort observes horizon {0}")]
    HorizonUnobserved(usize),

    #[error("validation error: {0}")]
    Validation(String),

    /// A quantity is mathematically undefined for the given inputs.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid simulation or command configuration.
    #[error("invalid configuration: {parameter}: {message}")]
    Config { parameter: String, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(parameter: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            parameter: parameter.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(line: u64, column: Option<&str>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location {
                line,
                column: column.map(str::to_owned),
            },
            message: message.into(),
        }
    }
}
