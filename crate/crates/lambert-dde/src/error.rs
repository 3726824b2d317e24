use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("W_k(0) diverges for k = {0}; only the principal branch is defined at z = 0")]
    DivergentBranchAtZero(i64),
    #[error("derivative of W is undefined at the branch point z = -1/e (W = -1)")]
    UndefinedDerivativeAtBranchPoint,
    #[error("no real solution of w*exp(w) = {0}: argument below -1/e")]
    NoRealSolution(f64),
    #[error("branch index {0} outside the sanity bound |k| <= 1e6")]
    BranchOutOfRange(i64),
    #[error("non-finite value in input: {0}")]
    NonFinite(&'static str),
    #[error("iteration failed to converge: {context} (residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence {
        context: &'static str,
        residual: f64,
        iterations: usize,
    },
    #[error("matrix is defective beyond the supported closed forms (eigenvector condition {0:.3e})")]
    DefectiveUnsupported(f64),
    #[error("Jordan block of size > 1 with eigenvalue at a Lambert W branch-point value (\u{00b1}1/e) on branch {0}")]
    BranchPointJordanBlock(i64),
    #[error("matrix shape unsupported: {0}")]
    ShapeUnsupported(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("a characteristic root is suspected on or near the region boundary (min |f| on path {0:.3e})")]
    BoundaryRootSuspected(f64),
    #[error("root count mismatch: winding number {winding} vs {refined} refined roots; adjust region or grid")]
    CountMismatch { winding: i64, refined: usize },
    #[error("root set is not closed under conjugation: {0} has no conjugate partner")]
    ConjugationClosureViolated(String),
    #[error("degenerate pair: the two roots must be distinct")]
    DegeneratePair,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
