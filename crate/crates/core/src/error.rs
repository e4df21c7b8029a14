use thiserror::Error;

/// Errors produced by the risk engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("negative weight {weight} at position {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("total weight is zero")]
    ZeroTotalWeight,
    #[error("non-finite value at position {index}")]
    NonFiniteValue { index: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot form {k} bins from {distinct} distinct environment states")]
    BinningInfeasible { k: usize, distinct: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index {index} out of range for {len} states")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("grid level {0} is not attainable on the auxiliary uniform grid")]
    GridNotAttainable(f64),
    #[error("level {0} is not attainable as the probability of a set of states")]
    LevelNotAttainable(f64),
    #[error("specification is not concave: {0}")]
    NonConcaveSpec(String),
    #[error("distortion is not concave")]
    NonConcave,
    #[error("ground set of size {n} exceeds the limit {max}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("invalid distortion: {0}")]
    InvalidDistortion(String),
    #[error("invalid state rule: {0}")]
    InvalidRule(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("state {0} is not in the support of the environment")]
    StateNotInSupport(f64),
    #[error("measure is not dominated by the distorted probability")]
    NotDominated,
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
