use thiserror::Error;

/// Errors raised by the simulation, distance and training layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("qubit index {0} used more than once")]
    DuplicateQubit(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("measuring every qubit would leave an empty register")]
    MeasureAll,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("transport solver failure: {0}")]
    Transport(String),

    #[error("non-finite loss in cycle {cycle}, iteration {iter}")]
    NonFiniteLoss { cycle: usize, iter: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
