use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("offspring distribution is not critical: mean {mean}")]
    NonCritical { mean: f64 },
    #[error("offspring distribution has zero variance (p_1 = 1)")]
    ZeroVariance,
    #[error("offspring distribution has p_0 = 0")]
    MissingZero,
    #[error("invalid probability table: {0}")]
    InvalidTable(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0} has no exact rational representation")]
    NotRational(String),
    #[error("degree sum {sum} differs from n - 1 = {expected}")]
    BadSum { sum: u64, expected: u64 },
    #[error("not a degree sequence: {0}")]
    InvalidTree(String),
    #[error("size {n} exceeds the enumeration cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("P(|T| = {n}) = 0")]
    ZeroProbability { n: usize },
    #[error("size {n} is not 1 modulo the span {span}")]
    SpanMismatch { n: usize, span: u32 },
    #[error("no acceptance within {rounds} rejection rounds")]
    RejectionBudgetExceeded { rounds: u64 },
    #[error("tree grew beyond the size cap {cap}")]
    Overflow { cap: usize },
    #[error("tree height {height} exceeds truncation depth {depth}")]
    HeightExceeded { height: usize, depth: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
