use thiserror::Error;

/// Errors produced by the forward model, weighting, solver and certificate code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator is singular (pivot {pivot:e} at row {row})")]
    SingularOperator { row: usize, pivot: f64 },

    #[error("fine grid with {fine} cells per side is not a multiple of coarse grid with {coarse}")]
    IncompatibleGrids { fine: usize, coarse: usize },

    #[error("matrix is rank deficient: sigma_{k} = {sigma:e} <= {threshold:e}")]
    RankDeficient { k: usize, sigma: f64, threshold: f64 },

    #[error("selected columns are linearly dependent (sigma_min/sigma_max = {ratio:e})")]
    DependentColumns { ratio: f64 },

    #[error("column {0} of C is numerically zero")]
    ZeroColumn(usize),

    #[error("alpha = {alpha:e} is not below w_j = {weight:e}")]
    AlphaTooLarge { alpha: f64, weight: f64 },

    #[error("solver did not converge after {} iterations (kkt residual {:e})", .0.iterations, .0.kkt_residual)]
    NotConverged(Box<crate::solver::SolveResult>),

    #[error("argmax tie between indices {0} and {1}; non-parallelism fails at working precision")]
    AssumptionViolated(usize, usize),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("gram matrix is singular (rcond {0:e})")]
    SingularGram(f64),

    #[error("columns {0} and {1} are not orthogonal")]
    NotOrthogonal(usize, usize),

    #[error("observation has zero norm; cannot rescale noise")]
    ZeroData,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
