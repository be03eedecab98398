use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("basis index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("abscissa {x} is outside the {basis} domain")]
    Domain { x: f64, basis: &'static str },
    #[error("degree {degree} exceeds the bound {bound}")]
    DegreeOverflow { degree: usize, bound: usize },
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("tick time {t} ns precedes the anchor {anchor} ns")]
    TimeBackwards { t: i64, anchor: i64 },
    #[error("invalid tick: {0}")]
    InvalidTick(String),
    #[error("metric is not positive definite (smallest eigenvalue {0:e})")]
    IndefiniteMetric(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("anchor mismatch: {left} ns vs {right} ns")]
    AnchorMismatch { left: i64, right: i64 },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Process exit status: 1 usage, 2 input, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownField(_) => 1,
            Error::Parse { .. }
            | Error::InvalidTick(_)
            | Error::TimeBackwards { .. }
            | Error::Io { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
