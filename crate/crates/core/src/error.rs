use thiserror::Error;

/// Errors produced by the solver and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (|M[{row},{col}] - M[{col},{row}]| = {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("constraint matrix does not have full row rank")]
    RankDeficient,

    #[error("non-finite entry in {0}")]
    NonFiniteEntry(&'static str),

    #[error("scaling entry {index} is not positive ({value:e})")]
    NonPositiveScaling { index: usize, value: f64 },

    #[error("rank-one update {step} broke down (denominator {denom:e})")]
    SingularUpdate { step: usize, denom: f64 },

    #[error("workspace is at step {current}, cannot apply step {requested}")]
    StepOutOfOrder { current: usize, requested: usize },

    #[error("point is not strictly interior: {0}")]
    NotInterior(String),

    #[error("start point is not feasible: {0}")]
    InfeasibleStart(String),

    #[error("could not generate a full-rank instance after {0} attempts")]
    GenerationFailed(usize),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("problem file: {0}")]
    Schema(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
