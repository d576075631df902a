use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("adjacency matrix is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare { row: usize, len: usize, expected: usize },
    #[error("adjacency weight a[{row}][{col}] = {value} is negative or not finite")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("adjacency has a self-loop at node {index}")]
    SelfLoop { index: usize },
    #[error("topology must contain the leader and at least one follower")]
    EmptyTopology,

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },
    #[error("unknown uncertainty id {0} (expected 1..=5)")]
    UnknownUncertaintyId(u32),

    #[error("bad bounds on axis {axis}: lo must be finite and strictly below hi")]
    BadBounds { axis: usize },
    #[error("bad lattice count on axis {axis}: at least 2 centers are required")]
    BadCount { axis: usize },
    #[error("RBF width must be finite and positive, got {0}")]
    BadWidth(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("averaging window [{start}, {end}] holds fewer than two snapshots")]
    EmptyWindow { start: f64, end: f64 },

    #[error("agent {agent}: no state supplied for neighbor {neighbor}")]
    MissingNeighbor { agent: usize, neighbor: usize },
    #[error("agent {agent}: no derivative supplied for neighbor {neighbor}")]
    MissingNeighborDerivative { agent: usize, neighbor: usize },

    #[error("invalid gain {field}: {reason}")]
    InvalidGain { field: &'static str, reason: &'static str },
    #[error("invalid configuration {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },

    #[error("non-finite state at t = {time} in component {component}")]
    NonFiniteState { time: f64, component: usize },

    #[error("degenerate fit segment: {0}")]
    DegenerateSegment(&'static str),
    #[error("trace carries no oracle series for agent {0}")]
    MissingOracleSeries(usize),
}
