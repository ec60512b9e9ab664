use thiserror::Error;

/// Errors produced by decomposition routines and their supporting numerics.
#[derive(Debug, Error)]
pub enum LrpdError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_dev:.3e} exceeds {tol:.3e}")]
    NotSymmetric { max_dev: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank {k} out of range for dimension {n}")]
    RankOutOfRange { k: usize, n: usize },

    #[error("eigendecomposition failed: reconstruction residual {residual:.3e}")]
    EigFailed { residual: f64 },

    #[error("matrix has zero Frobenius norm; relative error undefined")]
    ZeroMatrix,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("top-{k} eigenvalue {lambda:.3e} is negative with eigenvalue clamping disabled")]
    NegativeEigenvalue { k: usize, lambda: f64 },

    #[error("sketch width {s} exceeds dimension {n}")]
    SketchTooWide { s: usize, n: usize },

    #[error("budget {budget} <= rank {rank} requires a dense matrix for the deterministic fallback")]
    FallbackNeedsDense { budget: usize, rank: usize },

    #[error("exact diagonal mode requires the diagonal of the operator")]
    MissingExactDiagonal,

    #[error("backtracking exceeded {max_backtracks} doublings (L = {l:.3e})")]
    BacktrackExceeded { max_backtracks: usize, l: f64 },

    #[error("model lost positive definiteness at iteration {iter}; flagged diverged")]
    Diverged { iter: usize },

    #[error(
        "contraction precondition violated: delta - 2*norm_d0 = {margin:.3e} <= 1; \
         rescale the input by alpha > 1/(delta - 2*norm_d0) before applying the bound"
    )]
    ContractionPrecondition { margin: f64 },

    #[error("degenerate bound parameters: {0}")]
    DegenerateBound(String),

    #[error("returns matrix needs at least 2 observations, got {rows}")]
    TooFewObservations { rows: usize },

    #[error("non-finite value at row {row}, column {col} ({context})")]
    NonFiniteValue {
        row: usize,
        col: usize,
        context: String,
    },

    #[error("diagonal entry {index} is {value:.3e}; correlation features need a positive diagonal")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, LrpdError>;
