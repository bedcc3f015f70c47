use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("statistic undefined for fewer than 2 atoms (got {0})")]
    TooFewAtoms(usize),

    #[error("observation vector is zero")]
    ZeroObservation,

    #[error("size {size} exceeds the dense gate of {limit}")]
    SizeGate { size: usize, limit: usize },

    #[error("numerical rank {found} is below the required {expected}; truncate the factor to its numerical rank first")]
    RankDeficient { expected: usize, found: usize },

    #[error("shifted pivot index {index:?} (axis {axis}) leaves the index set")]
    PivotOutsideIndexSet { index: Vec<i64>, axis: usize },

    #[error("atom Gram matrix is ill-conditioned (cond = {cond:e}); closest pair is atoms {first} and {second}")]
    IllConditioned { cond: f64, first: usize, second: usize },

    #[error("{0} atom(s) left unmatched; report the Jaccard index instead")]
    UnmatchedAtoms(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
