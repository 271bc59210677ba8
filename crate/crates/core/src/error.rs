use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate element (Jacobian determinant {0})")]
    DegenerateElement(f64),

    #[error("Lagrange degree {0} not supported (need k >= 2)")]
    UnsupportedDegree(usize),

    #[error("no quadrature rule of exactness degree {0} (supported: 1..=10)")]
    UnsupportedQuadrature(usize),

    #[error("index ({row}, {col}) out of range for {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("unknown problem `{name}` (valid: {valid})")]
    UnknownProblem { name: String, valid: String },

    #[error("negative source: f = {value} at ({x}, {y})")]
    NegativeSource { x: f64, y: f64, value: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
