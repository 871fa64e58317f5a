use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("seminorm root not bracketed after {steps} bisection steps")]
    NoConvergence { steps: usize },

    #[error("quadrature node budget exceeded ({used} > {budget})")]
    BudgetExceeded { used: u64, budget: u64 },

    #[error("degenerate fit window: {0}")]
    DegenerateFit(String),

    #[error("sublevel grid too coarse: refinement changed the value by {relative_change:.3}")]
    GridTooCoarse { relative_change: f64 },

    #[error("dyadic sum diverges: N = {n_exponent} must exceed {critical}")]
    Divergent { n_exponent: f64, critical: f64 },

    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
}

pub type Result<T> = std::result::Result<T, Error>;
