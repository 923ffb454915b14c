//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (bad magic, bad token, entry out of base range).
    #[error("format error: {0}")]
    Format(String),

    /// File shorter than its header promises.
    #[error("length error: {0}")]
    Length(String),

    /// A value or count outside its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// Incompatible image/block dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An operation parameter violates its precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A 2-means split was requested on fewer than two distinct points.
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    /// Mismatched vector lengths.
    #[error("shape error: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
