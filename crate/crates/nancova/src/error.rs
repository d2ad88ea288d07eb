use thiserror::Error;

/// Errors produced by the nancova library.
#[derive(Debug, Error)]
pub enum NancovaError {
    /// Input data violates a precondition (empty sample, NaN, singleton group, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The covariate block of the pooled covariance matrix is singular or
    /// ill-conditioned, typically caused by a constant or collinear covariate.
    #[error("degenerate covariate: {0}")]
    DegenerateCovariate(String),

    /// A variance trace required by the test statistic is (numerically) zero,
    /// e.g. because all observations are tied.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// A single bootstrap resample collapsed (singular covariate block or
    /// vanishing variance trace). Draws hitting this are redrawn.
    #[error("degenerate bootstrap draw: {0}")]
    DegenerateDraw(String),

    /// More than 5% of the requested bootstrap draws were degenerate.
    #[error("too many degenerate bootstrap draws: {degenerate} degenerate events for {requested} requested draws")]
    TooManyDegenerateDraws { degenerate: u64, requested: u64 },

    /// The requested ordinal correlation cannot be reached for the given marginals.
    #[error("infeasible target correlation {target}: achievable range is about [{lo:.3}, {hi:.3}]")]
    InfeasibleCorrelation { target: f64, lo: f64, hi: f64 },

    /// A Monte Carlo study aborted because more than 1% of runs errored.
    #[error("simulation aborted: {failed} of {total} runs errored (first error: {first})")]
    SimulationFailed { failed: u64, total: u64, first: String },
}

pub type Result<T> = std::result::Result<T, NancovaError>;
