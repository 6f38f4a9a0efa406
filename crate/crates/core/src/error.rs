use thiserror::Error;

use crate::prob::Symbol;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("tensor product dimension {dim} exceeds the cap of {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("operator is not an involution: max |A^2 - I| = {0:e}")]
    NotInvolutory(f64),

    #[error("operator is not unitary: max |U^dag U - I| = {0:e}")]
    NotUnitary(f64),

    #[error("projectors do not form a PVM: {0}")]
    NotPvm(String),

    #[error("invalid probability space: {0}")]
    InvalidSpace(String),

    #[error("symbol {0} is not in the alphabet")]
    ForeignSymbol(Symbol),

    #[error("conditioning event has probability zero")]
    ZeroProbabilityEvent,

    #[error("product alphabet size {size} exceeds the cap of {cap}")]
    ProductTooLarge { size: usize, cap: usize },

    #[error("symbol {0} is not a tuple with coordinate {1}")]
    NotTuple(Symbol, usize),

    #[error("set of strings is not prefix-free: {0:?} is a prefix of {1:?}")]
    NotPrefixFree(Vec<Symbol>, Vec<Symbol>),

    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("world prefix has {length} symbols, block test with k={block_len} over {alphabet} symbols needs at least {needed}")]
    InsufficientLength { length: usize, block_len: usize, alphabet: usize, needed: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conditioned cell {0} received no samples")]
    EmptyCell(String),

    #[error("perfect correlation violated for coin triple {triple}: {violations} trial(s)")]
    PerfectCorrelationViolated { triple: String, violations: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
