use thiserror::Error;

/// Errors surfaced by simulator, graph, and training operations.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The observable must act on the readout wire alone.
    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("graph contains a cycle through vertex {0}")]
    Cycle(usize),

    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),

    #[error("missing entry for vertex {0}")]
    MissingVertex(usize),

    #[error("no arc from vertex {0} to vertex {1}")]
    UnknownArc(usize, usize),

    /// In-arcs of a vertex disagree on the shared gate parameter.
    #[error("inconsistent gate parameter on in-arcs of vertex {0}")]
    ThetaMismatch(usize),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("corrupt trace: {0}")]
    CorruptTrace(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
