use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Where in an input document a parse failure happened.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Location {
    pub line: Option<usize>,
    pub field: Option<String>,
}

impl Location {
    pub fn line(line: usize) -> Self {
        Self {
            line: Some(line),
            field: None,
        }
    }

    pub fn field(field: impl Into<String>) -> Self {
        Self {
            line: None,
            field: Some(field.into()),
        }
    }

    pub fn line_field(line: usize, field: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            field: Some(field.into()),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.field) {
            (Some(l), Some(name)) => write!(f, "line {l}, field `{name}`"),
            (Some(l), None) => write!(f, "line {l}"),
            (None, Some(name)) => write!(f, "field `{name}`"),
            (None, None) => write!(f, "<unknown location>"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("eigensolver did not converge on a {0}x{0} matrix")]
    EigFailure(usize),

    #[error("reconstruction left an imaginary part of norm {residue:e} (allowed {allowed:e})")]
    NonRealResult { residue: f64, allowed: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no data: {0}")]
    EmptyData(String),

    #[error("rank {requested} exceeds the maximum {max}")]
    RankTooLarge { requested: usize, max: usize },

    #[error(
        "could not make the matrix diagonalizable after {retries} doublings (last gamma {gamma:e})"
    )]
    PerturbationFailed { retries: u32, gamma: f64 },

    #[error("mode subset splits the conjugate pair ({0}, {1})")]
    NonConjugateSubset(usize, usize),

    #[error("numerical overflow at step {step}: entry magnitude {magnitude:e}")]
    NumericalOverflow { step: usize, magnitude: f64 },

    #[error("sequence {index} has {len} frames, at least {min} required")]
    TooShort {
        index: usize,
        len: usize,
        min: usize,
    },

    #[error(
        "Riccati iteration did not converge in {iters} iterations (last change {last_change:e})"
    )]
    RiccatiNoConverge { iters: usize, last_change: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn parse(location: Location, message: impl Into<String>) -> Self {
        Error::Parse {
            location,
            message: message.into(),
        }
    }

    pub fn dims(message: impl Into<String>) -> Self {
        Error::DimensionMismatch(message.into())
    }

    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EigFailure(_) => "EigFailure",
            Error::NonRealResult { .. } => "NonRealResult",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::EmptyData(_) => "EmptyData",
            Error::RankTooLarge { .. } => "RankTooLarge",
            Error::PerturbationFailed { .. } => "PerturbationFailed",
            Error::NonConjugateSubset(..) => "NonConjugateSubset",
            Error::NumericalOverflow { .. } => "NumericalOverflow",
            Error::TooShort { .. } => "TooShort",
            Error::RiccatiNoConverge { .. } => "RiccatiNoConverge",
            Error::SingularMatrix(_) => "SingularMatrix",
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse { .. } => "ParseError",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::Io(_) => "IoError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::EigFailure(_)
            | Error::NonRealResult { .. }
            | Error::PerturbationFailed { .. }
            | Error::NumericalOverflow { .. }
            | Error::RiccatiNoConverge { .. }
            | Error::SingularMatrix(_) => ErrorClass::Numerical,
            Error::InvalidArgument(_) | Error::NonConjugateSubset(..) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
