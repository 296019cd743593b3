use thiserror::Error;

/// Errors raised by the solvers and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("order s = {s} outside the admissible range {range}")]
    OrderOutOfRange { s: f64, range: &'static str },

    #[error("field is not zero mean (mass-weighted mean {mean:e})")]
    NotZeroMean { mean: f64 },

    #[error("requested {requested} modes but only {available} nonzero modes exist")]
    TooManyModes { requested: usize, available: usize },

    #[error("eigensolver did not converge for mode {mode}: relative residual {residual:e}")]
    EigenNonConvergence { mode: usize, residual: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("point {x} lies outside the domain [{left}, {right}]")]
    PointOutsideDomain { x: f64, left: f64, right: f64 },

    #[error("invalid observation window [{lo}, {hi}]")]
    InvalidWindow { lo: f64, hi: f64 },

    #[error("source parameter b = {0} is an integer (resonant with a Neumann eigenvalue)")]
    ResonantSource(f64),

    #[error("invalid prior configuration: {0}")]
    InvalidPrior(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("posterior normalization is ill-conditioned: {0}")]
    IllConditionedNormalization(String),

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("power iteration stagnated after {iterations} iterations (relative change {change:e})")]
    PowerIterationStagnation { iterations: usize, change: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
