//! Error types shared across the library.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;

/// Errors produced by the numerical routines and file formats.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A matrix violated a structural precondition (non-finite entries,
    /// asymmetry, wrong dimensions for the requested operation).
    #[error("InvalidMatrix: {0}")]
    InvalidMatrix(String),

    /// Every eigenvalue of a mass matrix fell below the rank cutoff.
    #[error("RankZero: matrix is numerically zero at the requested cutoff")]
    RankZero,

    /// Array arguments with incompatible or empty shapes.
    #[error("InvalidShape: {0}")]
    InvalidShape(String),

    /// The requested activation cannot be used in this context.
    #[error("UnsupportedActivation: {0}")]
    UnsupportedActivation(String),

    /// Operation requires a single-layer feature map.
    #[error("UnsupportedDepth: {0}")]
    UnsupportedDepth(String),

    /// An SDE/ODE integration produced a non-finite state.
    #[error("TrajectoryDiverged: non-finite state at step {step}")]
    TrajectoryDiverged { step: usize },

    /// Not enough samples to honor the request.
    #[error("InsufficientData: {0}")]
    InsufficientData(String),

    /// Unrecognized benchmark system name.
    #[error("UnknownSystem: {0}")]
    UnknownSystem(String),

    /// Degenerate sampling domain.
    #[error("InvalidDomain: {0}")]
    InvalidDomain(String),

    /// The iterative trainer produced a non-finite loss.
    #[error("DivergedTraining: non-finite loss at epoch {epoch}")]
    DivergedTraining { epoch: usize },

    /// Fewer than two ensemble members could be fitted.
    #[error("EnsembleFailed: {0}")]
    EnsembleFailed(String),

    /// Every k-means restart ended with an empty cluster.
    #[error("ClusteringFailed: {0}")]
    ClusteringFailed(String),

    /// A function with zero variance cannot be compared or aligned.
    #[error("DegenerateFunction: {0}")]
    DegenerateFunction(String),

    /// Malformed binary or text artifact.
    #[error("FormatError: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
