use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("mass matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("eigen solver failed: {0}")]
    EigenFailure(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Newton failed to converge at step {step} after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("singular Jacobian at omega = {omega}")]
    SingularJacobian { omega: f64 },
    #[error("harmonic balance did not converge after {iterations} iterations (residual {residual:e})")]
    HbNoConvergence { iterations: usize, residual: f64 },
    #[error("continuation step underflow at omega = {omega}, amplitude = {amplitude} after {points} points")]
    StepUnderflow {
        omega: f64,
        amplitude: f64,
        points: usize,
    },
    #[error("continuation exceeded {0} points without leaving the frequency range")]
    TooManyPoints(usize),
    #[error("resonance guard: {0}")]
    ResonanceGuard(String),
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("landmark detection: {0}")]
    Landmarks(String),
    #[error("value {value} outside of range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
