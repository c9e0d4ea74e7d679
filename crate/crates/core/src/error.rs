use thiserror::Error;

use crate::design::DesignResult;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has complex eigenvalues (discriminant {discriminant:e})")]
    ComplexEigenvalues { discriminant: f64 },

    #[error("matrix has a repeated eigenvalue (discriminant {discriminant:e})")]
    RepeatedEigenvalue { discriminant: f64 },

    #[error("eigenvector matrix is singular (det {det:e})")]
    SingularEigenvectorMatrix { det: f64 },

    #[error("state matrix is singular (det {det:e}); no unique equilibrium")]
    SingularSystem { det: f64 },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("trajectory diverged at t = {t} (|x| = {norm:e})")]
    Diverged { t: f64, norm: f64 },

    #[error("chattering detected: {events} switching events near t = {t}")]
    ChatteringDetected { t: f64, events: usize },

    #[error("need at least {needed} switching events, found {found}")]
    InsufficientEvents { needed: usize, found: usize },

    #[error("period must be positive, got {0}")]
    NonPositivePeriod(f64),

    #[error("point ({x1}, {x2}) is not on the switching line (offset {offset:e})")]
    PointNotOnLine { x1: f64, x2: f64, offset: f64 },

    #[error("no return to the switching line within t = {t_cap}")]
    NoReturn { t_cap: f64 },

    #[error("design residual is not finite")]
    NonFiniteResidual,

    #[error("design solver did not converge (best residual {:e})", best.residual_norm)]
    NoConvergence { best: Box<DesignResult> },

    #[error("finite-difference Jacobian is rank deficient (rank {rank}, need {needed})")]
    SingularJacobian { rank: usize, needed: usize },

    #[error("invalid cycle specification: {0}")]
    InvalidSpec(String),

    #[error("inconsistent targets: {0}")]
    InconsistentTargets(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("time is not strictly increasing at data row {row}")]
    NonMonotoneTime { row: usize },

    #[error("no switching detected: {0}")]
    NoSwitchDetected(String),

    #[error("switching points are degenerate (all coincide)")]
    DegeneratePoints,

    #[error("data does not cover a full period between same-direction switchings")]
    InsufficientPeriod,

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Innermost error when wrapped by pipeline stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
