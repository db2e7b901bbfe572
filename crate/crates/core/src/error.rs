use thiserror::Error;

use crate::linalg::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("fields live on different discrete spaces")]
    SpaceMismatch,

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    /// `∫Φ(w) dx + B` must stay positive for the auxiliary variable to exist.
    #[error("non-positive auxiliary radicand {radicand:.6e}; the constant B is too small")]
    NonPositiveRadicand { radicand: f64 },

    #[error("{solver} did not converge: {report}")]
    NotConverged { solver: &'static str, report: SolveReport },

    #[error("singular matrix: pivot {pivot:.3e} at row {row}")]
    SingularMatrix { row: usize, pivot: f64 },

    #[error("dense system of order {order} exceeds the limit of {limit}")]
    DenseTooLarge { order: usize, limit: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
