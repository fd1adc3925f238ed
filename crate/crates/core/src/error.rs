use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inadmissible singular coefficient: s·p = {product} is not below n = {dim}")]
    Inadmissible { product: f64, dim: usize },

    #[error("empty region")]
    EmptyRegion,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("stencil arm along line {line} leaves the domain at node {node}")]
    ArmOutside { node: usize, line: usize },

    #[error("scheme is not monotone: {violations} of {samples} perturbations decreased the operator")]
    NonMonotone { violations: usize, samples: usize },

    #[error("solver diverged at sweep {sweep}: residual {residual:e} (best {best:e})")]
    Diverged {
        sweep: usize,
        residual: f64,
        best: f64,
    },

    #[error("no convergence after {iterations} iterations: residual {residual:e} > tol {tol:e}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("linear solver failed: {0}")]
    LinearSolve(String),

    #[error("power iteration stalled after {steps} steps: α = {alpha}, field change {change:e}")]
    PowerStalled {
        steps: usize,
        alpha: f64,
        change: f64,
        /// α after every step.
        trace: Vec<f64>,
    },

    #[error("sign lost at node {node}: value {value:e}")]
    SignLoss { node: usize, value: f64 },

    #[error("weight vanishes on every interior node")]
    ZeroWeight,

    #[error("too few usable scales: {found} (need at least {needed})")]
    TooFewScales { found: usize, needed: usize },

    #[error("structure condition violated: {0}")]
    StructureViolation(String),

    #[error("certificate refused at node {node}: verification field {value:e} > 0")]
    CertificateRefused { node: usize, value: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
