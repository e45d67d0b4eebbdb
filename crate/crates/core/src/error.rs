use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the harmonization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scan")]
    EmptyScan,

    #[error("invalid point {index}: {reason}")]
    InvalidPoint { index: usize, reason: String },

    /// A binary or text payload did not match its declared layout.
    #[error("format error at {location}: {message}")]
    Format { location: Location, message: String },

    #[error("value {value} outside domain [0, 1]")]
    Domain { value: f64 },

    #[error("value {value} outside response range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("curve '{name}': {message}")]
    Curve { name: String, message: String },

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("insufficient overlap: {0}")]
    InsufficientOverlap(String),

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("scan id {id} outside embedding dictionary of size {size}")]
    Dictionary { id: usize, size: usize },

    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("dataset corrupted: {0}")]
    Corrupted(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("no evaluation tile: {0}")]
    NoTile(String),

    #[error("missing benchmark artifacts: {0}")]
    Missing(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where in an input a format error was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Offset(usize),
    Line(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Offset(o) => write!(f, "byte offset {o}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

impl Error {
    pub(crate) fn at_offset(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            location: Location::Offset(offset),
            message: message.into(),
        }
    }

    pub(crate) fn at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
