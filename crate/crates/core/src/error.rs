use core::fmt;

use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point, reward or parameter lies outside its admissible domain.
    Domain(String),
    /// An argument refers to something that does not exist or is in the
    /// wrong state (unknown ball id, splitting an inactive ball, ...).
    InvalidArgument(String),
    /// No samples are available for an estimate (effective count is zero).
    NoData,
    /// An operation was invoked at the wrong point of the episode protocol.
    State(String),
    /// Agent and environment disagree on dimensions or horizon.
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NoData => f.write_str("no data: effective sample count is zero"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
