use thiserror::Error;

/// Errors produced by graph construction, dynamics evaluation, and selection.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("negative weight {weight} on edge ({from}, {to})")]
    NegativeWeight { from: usize, to: usize, weight: f64 },

    #[error("self-loop edge on node {0}")]
    SelfLoop(usize),

    #[error("duplicate leader index {0}")]
    DuplicateLeader(usize),

    #[error("leader set and anchor states disagree: {leaders} leaders, {anchors} anchors")]
    AnchorArity { leaders: usize, anchors: usize },

    #[error("initial state at node {node} does not match its anchor value")]
    AnchorMismatch { node: usize },

    #[error("leader set is empty")]
    EmptyLeaderSet,

    #[error("matrix is not a Laplacian: row {row} sums to {sum:e}")]
    NotLaplacian { row: usize, sum: f64 },

    #[error("matrix is not a Laplacian: positive off-diagonal {value:e} at ({row}, {col})")]
    PositiveOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("norm order p = {0} must lie in [1, inf)")]
    InvalidNormOrder(f64),

    #[error("failed to generate a strongly connected topology in {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("probability {0} outside [0, 1)")]
    InvalidProbability(f64),

    #[error("positive dwell required, got {0}")]
    InvalidDwell(f64),

    #[error("epoch sequence must contain at least one epoch")]
    EmptySequence,

    #[error("topology is not strongly connected")]
    NotStronglyConnected,

    #[error("integral diverges: no absorbing leader set")]
    DivergentIntegral,

    #[error("expected {expected} leader sets, got {got}")]
    SetCountMismatch { expected: usize, got: usize },

    #[error("ground set of size {n} exceeds the exhaustive enumeration limit {max}")]
    GroundSetTooLarge { n: usize, max: usize },

    #[error("leader budget {k} out of range 1..={n}")]
    BudgetOutOfRange { k: usize, n: usize },

    #[error("experts weights underflowed to zero and cannot be renormalized")]
    WeightUnderflow,

    #[error("loss {loss} outside declared range [0, {scale}]")]
    LossOutOfRange { loss: f64, scale: f64 },

    #[error("linear solve failed: matrix is numerically singular")]
    SingularMatrix,

    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
