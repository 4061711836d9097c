use thiserror::Error;

use crate::receivers::ReceiverKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("delay {delay} out of range for processing gain {n}")]
    DelayOutOfRange { delay: usize, n: usize },

    #[error("projected covariance is not positive definite")]
    SingularCovariance,

    #[error("composite signature has zero norm")]
    ZeroSignature,

    #[error("zero-forcing infeasible: {nuisance} nuisance vectors in a {dim}-dimensional space")]
    ZeroForcingInfeasible { nuisance: usize, dim: usize },

    #[error("zero SINR denominator")]
    ZeroDenominator,

    #[error("power must be positive, got {0}")]
    NonPositivePower(f64),

    #[error("user cannot be served: SINR is zero")]
    Unservable,

    #[error("packet length B = {0} must be at least 2")]
    PacketTooShort(usize),

    #[error("training length must be positive")]
    NoTraining,

    #[error("{receiver} infeasible: load {load} must be below {bound}")]
    Infeasible {
        receiver: ReceiverKind,
        load: f64,
        bound: f64,
    },

    #[error("no trial converged out of {trials}")]
    NotConverged { trials: usize },

    #[error("root finding failed: {0}")]
    RootNotFound(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
