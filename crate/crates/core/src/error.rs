//! Crate-wide error type.

use crate::fiducial::FiducialClass;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input data, with the 1-based line it came from.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("sampling rate missing: no fs= header and no override given")]
    MissingSampleRate,

    /// A parameter or combination of parameters violates its contract.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The batch carries no usable structure (constant signal, all-zero derivative).
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no dominant frequency above the noise floor inside the search band")]
    NoDominantFrequency,

    /// The band constraint admits no warping path.
    #[error("no warping path: {0}")]
    NoPath(String),

    /// A fiducial class could not be carried through a warping path.
    #[error("fiducial mapping failed for {class:?}: {msg}")]
    Mapping { class: FiducialClass, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
