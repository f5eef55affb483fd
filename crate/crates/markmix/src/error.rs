use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty session")]
    EmptySession,
    #[error("malformed action at position {0}: question without correctness flag")]
    MalformedAction(usize),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("empty chain list")]
    EmptyChainList,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no sequences to cluster")]
    NoSequences,
    #[error("all sequences unsupported under all priors in all restarts")]
    AllUnsupported,
    #[error("random walk exceeded {0} steps; chain is pathological")]
    PathologicalWalk(usize),
    #[error("label lists have different lengths: {estimated} vs {truth}")]
    LengthMismatch { estimated: usize, truth: usize },
    #[error("{malformed} of {total} input lines are malformed (more than half)")]
    TooManyMalformed { malformed: usize, total: usize },
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
