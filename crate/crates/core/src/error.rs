use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("model assumptions violated: {0}")]
    AssumptionViolation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("profile blows up: far-field decay rate {decay:.4} <= 2")]
    BlowUp { decay: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("no Liouville profile with the requested masses: {0}")]
    NoSolution(String),
    #[error("infeasible mass target: {0}")]
    InfeasibleTarget(String),
    #[error("balancing condition violated: relative integral {0:.3e}")]
    BalanceViolation(f64),

    #[error("no positive root of the mass system: {0}")]
    NoPositiveRoot(String),
    #[error("profile failure: {0}")]
    ProfileFailure(Box<Error>),

    #[error("point ({0}, {1}) lies outside the domain")]
    OutOfDomain(f64, f64),
    #[error("source evaluation is singular at ({0}, {1})")]
    SingularRhs(f64, f64),

    #[error("missing Green table for source ({0}, {1})")]
    MissingTable(f64, f64),
    #[error("degenerate critical point: smallest Hessian eigenvalue {0:.3e}")]
    DegenerateCritical(f64),
    #[error("iterate escaped the admissible configuration set")]
    EscapedDomain,

    #[error("profile radius {0:.3e} below the tabulated range")]
    ProfileRangeExceeded(f64),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("blow-up detected at t = {t:.4}: max u = {max_u:.3e}")]
    BlowUpDetected { t: f64, max_u: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
