use thiserror::Error;

/// Errors raised by tree construction, numerical kernels and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative entry in count design at ({row}, {col})")]
    NegativeCount { row: usize, col: usize },

    #[error("all-zero design cannot be normalized")]
    ZeroDesign,

    #[error("singular value decomposition did not converge")]
    SvdNotConverged,

    #[error("singular aggregated design: rank {rank} < {cols} active columns")]
    SingularDesign { rank: usize, cols: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
