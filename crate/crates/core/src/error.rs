use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty graph")]
    EmptyGraph,

    #[error("vertex {0} has no neighbors")]
    IsolatedVertex(usize),

    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("non-positive distance {weight} between {a} and {b}")]
    NonPositiveWeight { a: usize, b: usize, weight: f64 },

    #[error("points {a} and {b} coincide")]
    DuplicatePoints { a: usize, b: usize },

    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),

    #[error("third-order neighborhoods are disconnected around vertices {0:?}")]
    DisconnectedNeighborhoods(Vec<usize>),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("{n} vertices exceed the dense cap of {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("edge function pattern does not match the adjacency pattern")]
    PatternMismatch,

    #[error("incomplete Cholesky broke down at column {column} (last shift {shift:e})")]
    FactorizationBreakdown { column: usize, shift: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures are distinguished from bad user input by the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::FactorizationBreakdown { .. } | Error::NonFinite(_) | Error::Degenerate(_)
        )
    }
}
