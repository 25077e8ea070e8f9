use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear system is numerically singular (condition estimate {0:.3e})")]
    SingularSystem(f64),
    #[error("constraint system is infeasible (residual {0:.3e})")]
    InfeasibleConstraint(f64),
    #[error("preconditioned iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("point violates Ax = b (residual {0:.3e})")]
    InfeasiblePoint(f64),
    #[error("accepted step increased the objective by {0:.3e}")]
    SolverContractViolation(f64),
    #[error("exponent p = {0} is not supported on this path")]
    UnsupportedExponent(f64),
    #[error("width-reduction budget exceeded after {0} width steps")]
    WidthBudgetExceeded(usize),
    #[error("every zeta probe exceeded its width budget")]
    AllProbesFailed,
    #[error("residual step vanished")]
    DegenerateStep,
    #[error("Woodbury middle matrix is numerically singular")]
    SingularUpdate,
    #[error("malformed graph: {0}")]
    MalformedGraph(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("linear-solve budget of {0} exhausted")]
    BudgetExhausted(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
