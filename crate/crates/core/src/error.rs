use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid arguments or configuration.
    Config,
    /// Malformed, missing or degenerate input data.
    Data,
    /// A numerical procedure failed (non-PD matrix, divergence).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("non-finite training loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("mutual information estimate {0:e} is below round-off tolerance")]
    NegativeInformation(f64),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) | Error::InvalidGrid(_) => ErrorKind::Config,
            Error::Csv { .. }
            | Error::Io(_)
            | Error::InsufficientData(_)
            | Error::UnknownSymbol(_)
            | Error::Degenerate(_)
            | Error::DimensionMismatch { .. } => ErrorKind::Data,
            Error::NonFinite(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Diverged { .. }
            | Error::NegativeInformation(_) => ErrorKind::Numerical,
        }
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
