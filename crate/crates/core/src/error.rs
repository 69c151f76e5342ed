use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model evaluation produced a non-finite value in mode {mode} at x = {input:?}, t = {time}: {what}")]
    ModelEvaluation {
        mode: usize,
        input: Vec<f64>,
        time: f64,
        what: &'static str,
    },

    #[error("coefficient {what} does not vanish at the origin in mode {mode} (t = {time}, |value| = {magnitude:e})")]
    NonzeroAtOrigin {
        mode: usize,
        time: f64,
        what: &'static str,
        magnitude: f64,
    },

    #[error("generator has a negative off-diagonal rate {value} at ({row}, {col})")]
    NegativeRate { row: usize, col: usize, value: f64 },

    #[error("generator row {row} sums to {sum:e}, expected 0")]
    RowSum { row: usize, sum: f64 },

    #[error("generator is reducible; no unique stationary distribution")]
    Reducible,

    #[error("singular linear system")]
    Singular,

    #[error("matrix is not a Z-matrix: off-diagonal entry ({row}, {col}) = {value} is positive")]
    NotZMatrix { row: usize, col: usize, value: f64 },

    #[error("matrix is not a nonsingular M-matrix: theta[{index}] = {value} is not positive")]
    NotMMatrix { index: usize, value: f64 },

    #[error("horizon T = {0} is not positive; epsilon is too large relative to M")]
    NonPositiveHorizon(f64),

    #[error("root-equation evaluation overflowed at tau = {tau:e}")]
    Overflow { tau: f64 },

    #[error("maximal delay is below the smallest positive floating-point number")]
    Underflow,

    #[error("delay {tau:e} is not within the admissible range (the stability bound is >= 1)")]
    DelayTooLarge { tau: f64 },

    #[error("model is not globally Lipschitz; threshold calculus does not apply")]
    NotLipschitz,

    #[error("no feasible grid point")]
    Infeasible,

    #[error("path exploded at t = {0}")]
    Exploded(f64),

    #[error("non-positive value in estimation window at t = {0}")]
    NonPositive(f64),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
