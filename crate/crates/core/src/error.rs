use thiserror::Error;

/// Errors raised by the distribution engine, the coding primitives and the
/// protocol drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("event has zero probability")]
    ZeroMass,
    #[error("variable groups overlap: {0}")]
    OverlappingGroups(String),
    #[error("markov condition violated: {0}")]
    MarkovViolation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
