use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("eigensolver hit its iteration limit (best residual {residual:.3e})")]
    IterationLimit { residual: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("not a valid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("inconsistent correlators: {0}")]
    InconsistentCorrelators(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
