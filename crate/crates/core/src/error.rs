use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate Chebyshev grid: degree must be at least 1, got {0}")]
    DegenerateGrid(usize),

    #[error("invalid rectangle [{x0}, {x1}] x [{y0}, {y1}]")]
    InvalidRect { x0: f64, x1: f64, y0: f64, y1: f64 },

    #[error("point ({0}, {1}) is not a corner of the rectangle")]
    NotACorner(f64, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("potential is negative ({value}) at ({x}, {y})")]
    NegativePotential { x: f64, y: f64, value: f64 },

    #[error("non-trapping condition fails with respect to ({vertex_x}, {vertex_y}): measured constant {constant}")]
    Trapping { vertex_x: f64, vertex_y: f64, constant: f64 },

    #[error("collocation system is singular to working precision (rcond = {rcond:e})")]
    SingularSystem { rcond: f64 },

    #[error("merge singular: sigma_min(I - R1 R2) = {sigma_min:e} <= tol = {tol:e}")]
    MergeSingular { sigma_min: f64, tol: f64 },

    #[error("DtN near-resonant: sigma_min(I - R) = {sigma_min:e} <= tol = {tol:e}")]
    DtnNearResonant { sigma_min: f64, tol: f64 },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("failed at k = {k}: {source}")]
    AtWavenumber {
        k: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("merge failed at tree position {position}: {source}")]
    TreeMerge {
        position: String,
        #[source]
        source: Box<Error>,
    },

    #[error("root finder did not converge after {iterations} iterations (last iterate {last}, residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        last: String,
        residual: f64,
    },

    #[error("closed-form denominator underflow for mu = {0}")]
    DenominatorUnderflow(String),

    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed operator container: {0}")]
    Format(String),

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
