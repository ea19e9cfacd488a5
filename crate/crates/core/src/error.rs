use thiserror::Error;

/// Errors raised by the disc, frame and index machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid size {0} must be a power of two and at least 8")]
    InvalidGrid(usize),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("function is not real-valued (max |Im| = {max_imag:e})")]
    NotReal { max_imag: f64 },
    #[error("point |zeta| = {modulus} is too close to the unit circle")]
    TooCloseToBoundary { modulus: f64 },
    #[error("function does not extend holomorphically: negative spectrum mass {mass:e}")]
    NotHolomorphic { mass: f64 },
    #[error("loop passes within {min_modulus:e} of the origin at angle {angle}")]
    VanishingLoop { min_modulus: f64, angle: f64 },
    #[error("loop under-resolved: argument jump {jump} at angle {angle}")]
    UnderResolvedLoop { jump: f64, angle: f64 },
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
    #[error("Bishop iteration is not contracting (residual {residual:e} after {iterations} iterations)")]
    NonContraction { iterations: usize, residual: f64 },
    #[error("iteration budget of {max_iter} exhausted (residual {residual:e})")]
    MaxIterations { max_iter: usize, residual: f64 },
    #[error("finite-difference derivative inconsistent: {0}")]
    InconsistentDerivative(String),
    #[error("frame is singular at angle {angle} (smallest singular value {sigma_min:e})")]
    SingularFrame { angle: f64, sigma_min: f64 },
    #[error("section dimension unstable: {0}")]
    UnstableDimension(String),
    #[error("partial indices sum to {sum} but the total index is {total}")]
    IndexMismatch { sum: i64, total: i64 },
    #[error("negative partial index {index} in component {component}")]
    NegativeIndex { component: usize, index: i64 },
    #[error("twist invariant violated: {0}")]
    TwistInvariant(String),
    #[error("gluing probe failed: {0}")]
    GluingProbe(String),
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
    #[error("linearization is singular at sample {sample}")]
    SingularLinearization { sample: usize },
    #[error("attachment residual {residual:e} exceeds tolerance {tol:e}")]
    Attachment { residual: f64, tol: f64 },
    #[error("disc center moved by {shift:e}")]
    CenterMoved { shift: f64 },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
