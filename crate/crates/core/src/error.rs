use thiserror::Error;

/// Errors raised by calculators and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("instance too large for exhaustive evaluation: {0}")]
    Oversize(String),

    #[error("no feasible solution: {0}")]
    Infeasible(String),

    #[error("no root in the search interval: {0}")]
    NoRoot(String),

    #[error("valuations never reverse order on any outcome pair")]
    NoReversal,

    #[error("prompt-reversal guard tripped: sigma/delta_min = {ratio} exceeds limit {limit}")]
    GuardTripped { ratio: f64, limit: f64 },

    #[error("negative OSP margin {margin} at node {node}")]
    NegativeMargin { node: usize, margin: f64 },

    #[error("query ({head}, {relation}) has no candidate tail in the graph")]
    NoCandidate { head: String, relation: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
