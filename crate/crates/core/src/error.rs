use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite matrix")]
    NonFinite,

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("rank exceeds row dimension: rank {rank} > {rows}")]
    RankExceedsRows { rank: usize, rows: usize },

    #[error("sparsity k={k} out of range [1, {len}]")]
    SparsityOutOfRange { k: usize, len: usize },

    #[error("undefined ratio: reference matrix has zero norm")]
    UndefinedRatio,

    #[error("empty node list")]
    EmptyNodes,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("replica divergence at step {step}: node {node} disagrees with node 1")]
    ReplicaDivergence { step: usize, node: usize },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
