use thiserror::Error;

/// Invalid user-facing configuration: grids, fields, cases, sweeps.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("unsupported quadrature order {0} (expected 3, 4 or 5)")]
    QuadOrder(usize),
    #[error("invalid scheme configuration: {0}")]
    Scheme(String),
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

/// Failure of the sparse direct solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("structurally singular matrix (no pivot at step {index})")]
    StructurallySingular { index: usize },
    #[error("numerically singular matrix (non-finite value at unknown {index})")]
    NumericallySingular { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("factorization failed: {0}")]
    Backend(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
