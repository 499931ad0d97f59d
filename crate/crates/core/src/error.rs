//! Crate-wide error type.

use std::fmt;

/// Errors produced by solvers, trainers, and configuration handling.
#[derive(Debug)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    InvalidArg(String),
    /// A numerical quantity became NaN/Inf; the string names the offending term.
    NonFinite(String),
    /// An iterative solver failed to reach its tolerance, or a time integration
    /// blew up.
    Solver(String),
    /// Malformed persisted data (checkpoint, control field, config file).
    Parse(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite(term) => write!(f, "non-finite value in {term}"),
            Error::Solver(msg) => write!(f, "solver failure: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
