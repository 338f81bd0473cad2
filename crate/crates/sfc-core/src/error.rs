//! Crate-wide error type.

use std::fmt;

/// Errors produced by the frustum pipeline.
#[derive(Debug)]
pub enum Error {
    /// A point sits exactly at the sensor origin; azimuth and elevation are
    /// undefined so it cannot be projected.
    ZeroRangePoint { index: usize },
    /// A point carries a non-finite coordinate.
    NonFinitePoint { index: usize },
    /// A projected coordinate lies outside the grid.
    OutOfBounds { index: usize, u: u32, v: u32 },
    /// Operation needs at least one point.
    EmptyCloud,
    /// The integer key for (u, v, m) does not fit the 63-bit key budget.
    KeyOverflow,
    /// Frustum visiting ran past the point count; the end-of-frustum
    /// indicators are inconsistent with the index.
    CorruptIndicator { u: u32, v: u32 },
    /// Matrix or parameter dimensions disagree.
    ShapeMismatch(String),
    /// Requested sample count is outside [1, available].
    BadCount { requested: usize, available: usize },
    /// A label is outside [0, classes).
    BadLabel {
        index: usize,
        label: usize,
        classes: usize,
    },
    /// Scan file length is not a whole number of point records.
    MalformedScan { path: String, bytes: u64 },
    /// Label file length is not a whole number of records.
    MalformedLabels { path: String, bytes: u64 },
    /// Label record count disagrees with the companion scan.
    CountMismatch { expected: usize, actual: usize },
    /// Synthetic scene description is unusable.
    BadSpec(String),
    /// Malformed configuration file.
    BadConfig(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroRangePoint { index } => {
                write!(f, "point {index} has zero range; projection undefined")
            }
            Error::NonFinitePoint { index } => {
                write!(f, "point {index} has a non-finite coordinate")
            }
            Error::OutOfBounds { index, u, v } => {
                write!(f, "point {index} projects to ({u}, {v}) outside the grid")
            }
            Error::EmptyCloud => write!(f, "operation requires a non-empty cloud"),
            Error::KeyOverflow => write!(f, "(u, v, m) key exceeds the 63-bit budget"),
            Error::CorruptIndicator { u, v } => {
                write!(f, "frustum visit at ({u}, {v}) exceeded the point count")
            }
            Error::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Error::BadCount {
                requested,
                available,
            } => write!(f, "sample count {requested} outside [1, {available}]"),
            Error::BadLabel {
                index,
                label,
                classes,
            } => write!(f, "label {label} at point {index} outside [0, {classes})"),
            Error::MalformedScan { path, bytes } => {
                write!(f, "scan {path}: {bytes} bytes is not a whole point count")
            }
            Error::MalformedLabels { path, bytes } => {
                write!(
                    f,
                    "labels {path}: {bytes} bytes is not a whole record count"
                )
            }
            Error::CountMismatch { expected, actual } => {
                write!(f, "expected {expected} label records, found {actual}")
            }
            Error::BadSpec(what) => write!(f, "bad scene spec: {what}"),
            Error::BadConfig(what) => write!(f, "bad config: {what}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
