use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Instance file or in-memory instance failed validation. The message
    /// names the offending field.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),

    /// A policy tried to play an arm that is still cooling down.
    #[error("arm {id} is blocked for {remaining} more slot(s)")]
    BlockedArm { id: u32, remaining: u32 },

    /// A block policy violated its contract (duplicate arm, wrong length).
    #[error("block policy contract violation: {0}")]
    BlockContract(String),

    #[error("state space of {states} states exceeds cap {cap}")]
    StateCap { states: u128, cap: u64 },

    #[error("empty gap window for k={k}, k'={k2}")]
    EmptyGapWindow { k: usize, k2: usize },

    /// A bound constant would divide by a zero gap.
    #[error("unbounded constant: zero gap between arms {i} and {j}")]
    ZeroGap { i: usize, j: usize },

    #[error("free-exploration prefactor undefined for arm {j}: inverse delays of better arms sum to at least 1")]
    FreeExplorationUndefined { j: usize },

    /// Malformed tabular data (regret curves, ratings).
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
