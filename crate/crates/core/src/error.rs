use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure modes of the individual
/// subsystems so callers can match on what went wrong.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("graph is disconnected: spanning tree reached {reached} of {total} buses")]
    DisconnectedGraph { reached: usize, total: usize },

    #[error("flows are not angle-consistent: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    InconsistentFlows { residual: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("LP is infeasible")]
    Infeasible,

    #[error("simplex iteration limit hit after {0} pivots")]
    IterationLimit(usize),

    #[error("problem too large for vertex enumeration: {vars} variables (limit {limit})")]
    TooLarge { vars: usize, limit: usize },

    #[error("active-set system has no solution: residual {residual:.3e} exceeds {tol:.3e}")]
    NoSolution { residual: f64, tol: f64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("theorem preconditions not met: {0}")]
    PreconditionFailed(String),

    #[error("training points do not affinely span the load space (rank {rank} < {needed})")]
    DegenerateSpan { rank: usize, needed: usize },

    #[error("expected at least 2 price regions, found {0}")]
    RegionCountMismatch(usize),

    #[error("infeasible draw rate too high: {infeasible} of {attempts} draws; \
             lower the variation or fix the case capacities")]
    InfeasibleRateTooHigh { infeasible: usize, attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
