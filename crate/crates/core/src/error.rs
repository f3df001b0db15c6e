use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} failed)")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Schur complement {schur:e} is not positive (LICQ lost when bordering)")]
    SchurNotPositive { schur: f64 },
    #[error("LICQ violated when adding constraint {constraint}")]
    LicqViolation { constraint: usize },
    #[error("polyhedron is empty")]
    EmptyPolyhedron,
    #[error("critical region is empty")]
    EmptyRegion,
    #[error("critical region is lower dimensional")]
    LowerDimensional,
    #[error("candidate budget of {0} exceeded")]
    BudgetExceeded(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("unknown region {0}")]
    UnknownRegion(usize),
    #[error("hyperplane {hyperplane} is not stored on the path to node {node}")]
    HyperplaneNotStored { node: usize, hyperplane: usize },
    #[error("parameter is infeasible")]
    InfeasibleParameter,
    #[error("iteration cap of {0} reached")]
    IterationCap(usize),
    #[error("Riccati iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("tree and solution were built from different problems")]
    HashMismatch,
}

pub type Result<T> = std::result::Result<T, Error>;
