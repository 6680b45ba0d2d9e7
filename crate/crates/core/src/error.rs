use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mode {index} at {omega:.6e} rad/s is within 1e6 rad/s of the mirror mode (dispersive regime violated)")]
    DegenerateMode { index: i64, omega: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mode-coupling matrix is singular (|det| ratio {ratio:.3e}); system is at or beyond parametric instability")]
    SingularMatrix { ratio: f64 },

    #[error("pair ({j}, {k}) has |eps| = {eps:.6e} rad/s at or above its threshold {threshold:.6e} rad/s")]
    AboveThreshold { j: usize, k: usize, eps: f64, threshold: f64 },

    #[error("non-physical input: {0}")]
    NonPhysicalInput(String),

    #[error("gain below unity for mode {mode}: G = {gain}")]
    GainBelowUnity { mode: usize, gain: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("sample set is empty")]
    EmptySamples,

    #[error("optimizer failed: {0}")]
    OptimizerFailure(String),

    #[error("amplifier model has no fit covariance for mode {0}")]
    MissingFitCovariance(usize),

    #[error("zero variance in significance estimate")]
    ZeroVariance,

    #[error("fit diverged: {0}")]
    FitDiverged(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("solved added noise is negative (n = {0:.4}); gain or temperature inconsistent")]
    NegativeNoise(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
