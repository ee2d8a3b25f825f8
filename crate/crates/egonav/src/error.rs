//! Errors shared by the pluggable expert interfaces.

use thiserror::Error;

/// Failure of an expert backend (macro judge, narrator, navigator, or
/// execution expert). Scripted experts never fail; remote adapters map
/// transport and protocol errors into these variants.
#[derive(Debug, Error, PartialEq)]
pub enum ExpertError {
    /// The backend could not be reached (timeout, connection failure).
    #[error("expert unavailable: {0}")]
    Unavailable(String),

    /// The backend answered with a non-success status.
    #[error("remote expert error (status {status}): {message}")]
    Remote { status: u16, message: String },

    /// The reply did not follow the machine-parseable contract. The raw
    /// reply is attached for diagnosis.
    #[error("could not parse expert reply: {message}; raw reply: {raw:?}")]
    Parse { message: String, raw: String },

    /// The adapter was misconfigured (for example a missing credential).
    #[error("expert configuration error: {0}")]
    Config(String),
}
