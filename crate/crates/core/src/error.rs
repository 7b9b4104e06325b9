use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported dimension {got}: {what}")]
    UnsupportedDimension { got: usize, what: &'static str },

    #[error("matrix is not nonnegative (most negative entry {0:e})")]
    NotNonnegative(f64),

    #[error("matrix is not Metzler (most negative off-diagonal entry {0:e})")]
    NotMetzler(f64),

    #[error("vector is not nonnegative (most negative entry {0:e})")]
    NegativeVector(f64),

    #[error("vector is zero")]
    ZeroVector,

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("eigenvalue clustering is ambiguous: gap {gap:e} lies between cluster tolerance {tol:e} and {upper:e}")]
    AmbiguousCluster { gap: f64, tol: f64, upper: f64 },

    #[error("unsupported spectral structure: {0}")]
    UnsupportedStructure(String),

    #[error("matrix is reducible")]
    Reducible,

    #[error("spectrum is not real and nonnegative")]
    SpectrumNotRealNonnegative,

    #[error("vector is the Perron eigenvector (residual {residual:e})")]
    PerronEigenvector { residual: f64 },

    #[error("vector is not the Perron eigenvector (residual {residual:e})")]
    NotPerronEigenvector { residual: f64 },

    #[error("vector already lies in the interior of the cone at shift 0")]
    InteriorAtZero,

    #[error("no boundary crossing found below shift {0:e}")]
    NoBoundaryFound(f64),

    #[error("iteration cap {cap} exceeded; input may be close to an eigenvector")]
    IterationCap { cap: usize },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("matrix is singular or too ill-conditioned (condition estimate {0:e})")]
    Singular(f64),

    #[error("point lies outside the reference triangle: ({x}, {y})")]
    OutsideTriangle { x: f64, y: f64 },

    #[error("construction defect: {0}")]
    Defect(String),

    #[error("{0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown generator '{0}'")]
    UnknownGenerator(String),
}

pub type Result<T> = std::result::Result<T, Error>;
