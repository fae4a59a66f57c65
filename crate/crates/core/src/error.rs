use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Root finding or an iterative loop ran out of iterations. `best` holds the
    /// last iterate so callers can inspect or reuse it.
    #[error("no convergence after {iterations} iterations")]
    ConvergenceFailure { iterations: usize, best: Vec<f64> },

    #[error("zero vector has no sparse projection onto the unit sphere")]
    ZeroVector,

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The scalar dual grows without bound; the equality-constrained primal is
    /// infeasible. `direction` is the sign of the unbounded multiplier.
    #[error("dual objective is unbounded (multiplier direction {direction:+})")]
    DualUnbounded { direction: f64 },

    /// No pair of optimal-face vectors brackets the trace constraint.
    #[error("degenerate optimal face of dimension {}", basis.len())]
    DegenerateFace { basis: Vec<Vec<f64>> },

    #[error("ingest error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("insufficient data: {rows} usable rows, at least {required} required")]
    InsufficientData { rows: usize, required: usize },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("nonpositive price {value} at row {row}, column {column}")]
    InvalidPrice {
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("spread has zero volatility; no trades possible")]
    NoVolatility,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
