//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("linearization failed: {0}")]
    Linearization(String),

    #[error("subdomain not aligned with mesh lines: {0}")]
    MisalignedSubdomain(String),

    #[error("Korn-Poincare consistency failure: lhs = {lhs:e} with vanishing right-hand side")]
    KornPoincare { lhs: f64 },

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("backend {backend} cannot handle this problem: {reason}")]
    BackendUnavailable { backend: String, reason: String },

    #[error("density table fingerprint mismatch: table has {found}, caller expects {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("density table query out of range: {0}")]
    OutOfRange(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("singular mean gradient (det = {det:e})")]
    SingularMeanGradient { det: f64 },

    #[error("energy family is not bounded: {0}")]
    UnboundedEnergy(String),

    #[error("gradient cap cannot be met: {0}")]
    CapInfeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
