//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("inertia matrix is not positive definite (modeling bug)")]
    FactorizationFailure,
    #[error("end-effector index {index} out of range (model has {count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("unknown model `{0}` (shipped models: hopper, quadruped)")]
    UnknownModel(String),
}

#[derive(Debug, Error)]
pub enum ContactError {
    #[error("ground estimation requires at least one stance foot")]
    NoStanceFeet,
}

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("non-finite state produced at stage {stage} (integration unstable)")]
    NonFiniteState { stage: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum LqocError {
    #[error("control-space Hessian not positive definite at stage {stage}")]
    NotPositiveDefinite { stage: usize },
    #[error("KKT system of the dense oracle is singular")]
    SingularKkt,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Error)]
pub enum NlocError {
    #[error("line search failed: no step size decreased the cost")]
    LineSearchFailed,
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Lqoc(#[from] LqocError),
}

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("feedback phase called before any preparation phase")]
    NotPrepared,
    #[error("solver diverged: {0}")]
    SolverDiverged(String),
    #[error(transparent)]
    Nloc(#[from] NlocError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("task failed: {0}")]
    TaskFailed(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Nloc(#[from] NlocError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("signal shows no dominant periodicity")]
    NoPeriodicity,
}
