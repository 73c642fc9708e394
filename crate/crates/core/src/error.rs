use crate::dsl::ParseError;
use crate::scm::ValidationReport;

/// Errors shared by the distribution kernel, the model layer and the metric
/// layer. Parser errors carry their own spans and are wrapped here.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("conditioning event has probability zero")]
    ZeroProbabilityEvent,

    #[error("scopes overlap on `{0}`")]
    ScopeOverlap(String),

    #[error("bad scope: {0}")]
    BadScope(String),

    #[error("invalid distribution: {0}")]
    BadDistribution(String),

    #[error("invalid model:\n{0}")]
    InvalidModel(ValidationReport),

    #[error("joint table would need {cells} cells, above the cap of {cap}")]
    ModelTooLarge { cells: u128, cap: u128 },

    #[error("intervention would create a cycle: {0}")]
    CycleCreated(String),

    #[error("range mismatch: {0}")]
    RangeMismatch(String),

    #[error("bad query: {0}")]
    BadQuery(String),

    #[error("{0}")]
    Parse(#[from] ParseError),
}

pub type Result<T> = std::result::Result<T, Error>;
