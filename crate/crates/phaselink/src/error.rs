//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entry {index} has modulus {modulus}, expected 1 within {tol}")]
    NotUnitModulus { index: usize, modulus: f64, tol: f64 },

    #[error("phase vector needs at least 2 entries, got {0}")]
    VectorTooShort(usize),

    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian: |m[{q},{l}] - conj(m[{l},{q}])| = {deviation:e} exceeds tolerance")]
    NotHermitian { q: usize, l: usize, deviation: f64 },

    #[error("patch must contain at least one sample")]
    EmptyPatch,

    #[error("patch samples have inconsistent lengths: expected {expected}, sample {index} has {got}")]
    RaggedPatch {
        expected: usize,
        index: usize,
        got: usize,
    },

    #[error("closure residual needs p >= 3, got p = {0}")]
    ClosureNeedsTriplets(usize),

    #[error("degenerate zero entry at ({q},{l}); phase closure is undefined there")]
    DegenerateEntry { q: usize, l: usize },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    FixedPointNonConvergence {
        iterations: usize,
        residual: f64,
        last: Box<crate::types::HermitianMatrix>,
    },

    #[error("fixed-point iterate is singular or produced a non-positive quadratic form")]
    SingularIterate,

    #[error("estimator requires n > p, got n = {n}, p = {p}")]
    InsufficientSamples { n: usize, p: usize },

    #[error("diagonal entry {index} is {value}, expected strictly positive")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("shrinkage coefficient beta = {0} outside [0, 1]")]
    BetaOutOfRange(f64),

    #[error("rank k = {k} outside [1, {p}]")]
    RankOutOfRange { k: usize, p: usize },

    #[error("input is not positive semi-definite: eigenvalue {eigenvalue:e} below -{tol:e}")]
    NotPositiveSemiDefinite { eigenvalue: f64, tol: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error(
        "modulus matrix is numerically singular (reciprocal condition {rcond:e}); \
         regularize the plug-in (shrinkage or low-rank) before building this objective"
    )]
    SingularModulus { rcond: f64 },

    #[error("kernel is indefinite and the safeguard is disabled")]
    IndefiniteKernel,

    #[error("extreme eigenvalue is ambiguous: gap {gap:e} within {tol:e} of multiplicity")]
    AmbiguousEigenvector { gap: f64, tol: f64 },

    #[error("objective kind {0} has no quadratic kernel")]
    NoQuadraticKernel(&'static str),

    #[error("image index {index} out of range for stack with p = {p}")]
    ImageIndexOutOfRange { index: usize, p: usize },

    #[error("window {wh}x{ww} does not fit a {rows}x{cols} image")]
    WindowTooLarge {
        wh: usize,
        ww: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene model: {0}")]
    InvalidScene(String),

    #[error("bad stack file: {0}")]
    BadStackFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image encoding failed: {0}")]
    ImageEncoding(String),
}
