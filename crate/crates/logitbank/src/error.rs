//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in calibration, scoring, and I/O.
///
/// The CLI maps these onto exit codes: data-shaped failures (validation,
/// lookup, parse, domain) exit 2; statistical/numeric failures
/// (identifiability, no information, undefined statistics, non-finite
/// optimization) exit 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Input value outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid data: bad ranges, duplicate keys, empty inputs.
    #[error("validation error: {0}")]
    Validation(String),

    /// Unknown examinee or item identifier.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Too little data structure to identify the model parameters.
    #[error("identifiability error: {0}")]
    Identifiability(String),

    /// Empty effective item set: nothing carries information about ability.
    #[error("no information: {0}")]
    NoInformation(String),

    /// A statistic is undefined for this input (constant column, degenerate
    /// marginals, zero variance).
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    /// Optimization produced a non-finite value.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// A file could not be parsed; the message carries path and line context.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
