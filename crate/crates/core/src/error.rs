use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// The variants fall into three families that front ends (the CLI in
/// particular) map to distinct exit codes: I/O, input validation and
/// numerical failure. See [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("length mismatch: expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid value {value} at in-domain index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid shape {0:?}: need 1 to 3 positive extents")]
    Shape(Vec<usize>),

    #[error("empty domain: the mask selects no grid point")]
    EmptyDomain,

    #[error("connectivity {rule:?} is not defined for {dim}D fields")]
    Connectivity {
        rule: crate::ec::ConnectivityRule,
        dim: usize,
    },

    #[error("index {0} lies outside the domain")]
    OutsideDomain(usize),

    #[error("inconsistent sample: {0}")]
    InconsistentSample(String),

    #[error("not enough observations: need at least {needed}, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("zero variance across the sample at grid index {0}")]
    DegenerateLocation(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("no root of EEC(u) = {alpha} in [{lo}, {hi}]")]
    NoRoot { alpha: f64, lo: f64, hi: f64 },

    #[error("missing covariance: the LKC estimate carries no covariance matrix")]
    MissingCovariance,

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification of an [`Error`](enum@Error).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::RankDeficient(_)
            | Error::NoRoot { .. }
            | Error::Quadrature(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
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
