use thiserror::Error;

/// Errors raised by the measurement models and their front ends.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("orthogonal post-selection: |<phi|psi>| = {0:e}")]
    OrthogonalPostselection(f64),

    #[error("observable is proportional to the identity")]
    ProportionalToIdentity,

    #[error("pointer basis mismatch")]
    BasisMismatch,

    #[error("sampling grid too coarse: tail mass {0:e} outside grid")]
    GridTooCoarse(f64),

    #[error("zero probability outcome at x = {0}")]
    ZeroProbabilityOutcome(f64),

    #[error("term budget exceeded: {needed} terms > cap {cap}")]
    TermBudgetExceeded { needed: u128, cap: u128 },

    #[error("no post-selected runs")]
    NoPostselectedRuns,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical quality failure: {0}")]
    NumericQuality(String),
}

pub type Result<T> = std::result::Result<T, Error>;
