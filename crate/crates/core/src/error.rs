use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate vector (norm {0:e})")]
    DegenerateVector(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("spline fit is rank deficient (condition estimate {0:e})")]
    RankDeficient(f64),

    #[error("BRDF overflow at pixel ({x}, {y}): channel value {value:e}")]
    Overflow { x: usize, y: usize, value: f64 },

    #[error("non-finite gradient at pixel ({x}, {y}), light {light}")]
    NonfiniteGradient { x: usize, y: usize, light: usize },

    #[error("line search failed after {0} backtracks at the first iterate")]
    LineSearchFailure(usize),

    #[error("expected {expected} materials, got {got}")]
    RegionCountMismatch { expected: usize, got: usize },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },

    #[error("NaN or infinite value in file")]
    NanInFile,

    #[error("unsupported PNG bit depth: {0}")]
    BitDepthMismatch(String),

    #[error("unsupported PNG color type: {0}")]
    NonRgba(String),

    #[error("material file has {0} parameters, expected 108")]
    WrongCount(usize),

    #[error("material file has no version")]
    MissingVersion,

    #[error("material file: {0}")]
    MaterialSyntax(String),

    #[error("png: {0}")]
    Png(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics rather than of inputs or files.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Overflow { .. }
            | Error::NonfiniteGradient { .. }
            | Error::LineSearchFailure(_)
            | Error::RankDeficient(_) => true,
            Error::File { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
