use std::fmt;
use std::path::PathBuf;

/// Where in an input a parse failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Zero-based byte offset into the input.
    Byte(usize),
    /// One-based line number.
    Line(u64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Byte(offset) => write!(f, "byte {offset}"),
            Location::Line(line) => write!(f, "line {line}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("merge error: {0}")]
    Merge(String),

    #[error("no ground truth instances to evaluate")]
    EmptyGroundTruth,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("cannot build {k} folds from {videos} videos")]
    InvalidFoldCount { k: usize, videos: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("ground truth and predictions share no frame keys")]
    EmptyIntersection,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse_at_line(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
