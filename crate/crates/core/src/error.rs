use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Which factorization failed inside a blockwise likelihood term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorStage {
    /// Cholesky of the conditioning-set covariance.
    Conditioning,
    /// Cholesky of the updated block covariance.
    Block,
}

impl std::fmt::Display for FactorStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorStage::Conditioning => write!(f, "conditioning"),
            FactorStage::Block => write!(f, "block"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an argument contract (dimension mismatch, out-of-range value, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Dense Cholesky factorization hit a non-positive pivot.
    #[error("covariance not positive definite: pivot {pivot} failed")]
    NotPositiveDefinite { pivot: usize },

    /// Factorization failure inside one block's likelihood term.
    #[error("block {block}: {stage} covariance not positive definite (pivot {pivot})")]
    BlockFactorization {
        block: usize,
        stage: FactorStage,
        pivot: usize,
    },

    /// Text input (CSV, config, report) could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
