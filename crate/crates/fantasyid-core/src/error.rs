//! Crate-wide error type.
//!
//! Module-level errors (tensor shape violations, mesh defects, pose
//! degeneracies) convert into [`CoreError`]; the CLI maps the variants onto
//! process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset content missing, malformed, or inconsistent with the config.
    #[error("data error: {0}")]
    Data(String),

    /// A numeric kernel produced NaN/Inf or a contract was violated.
    #[error(transparent)]
    Tensor(#[from] crate::numerics::TensorError),

    /// Mesh invariant violation.
    #[error(transparent)]
    Mesh(#[from] crate::mesh3d::MeshError),

    /// Degenerate landmark configuration or pose-recovery failure.
    #[error(transparent)]
    Pose(#[from] crate::facepipe::PoseError),

    /// Metric input contract violation (empty frame list, size mismatch).
    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }

    pub fn metric(msg: impl Into<String>) -> Self {
        CoreError::Metric(msg.into())
    }

    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Config(_) | CoreError::Serde(_) => 2,
            CoreError::Data(_) | CoreError::Io(_) | CoreError::Mesh(_) | CoreError::Pose(_) => 3,
            CoreError::Tensor(_) | CoreError::Metric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
