use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input data violates a precondition (shape, label range, class counts).
    InvalidData(String),
    /// A configuration value is out of its documented range.
    InvalidConfig(String),
    /// A concept name that does not exist in the table.
    UnknownConcept { name: String, available: String },
    /// Training produced a non-finite loss.
    NonFinite { what: String, epoch: usize },
    /// Synthetic fixture failed its acceptance gate on every attempt.
    FixtureRejected(String),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidData(m) => write!(f, "invalid data: {m}"),
            Error::InvalidConfig(m) => write!(f, "invalid config: {m}"),
            Error::UnknownConcept { name, available } => {
                write!(f, "unknown concept `{name}` (available: {available})")
            }
            Error::NonFinite { what, epoch } => {
                write!(f, "non-finite loss in {what} at epoch {epoch}")
            }
            Error::FixtureRejected(m) => write!(f, "fixture rejected: {m}"),
        }
    }
}

impl core::error::Error for Error {}
