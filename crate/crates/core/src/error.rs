use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(String),
    #[error("unstable: spectral radius {rho:.6} >= 1")]
    Instability { rho: f64 },
    #[error("riccati iteration produced no solution (last residual {residual:.3e})")]
    NoSolution { residual: f64 },
    #[error("gamma {gamma} infeasible: {detail}")]
    InfeasibleGamma { gamma: f64, detail: String },
    #[error("iteration did not converge after {iters} steps (gap {gap:.3e})")]
    Divergence { iters: usize, gap: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPd(String),
    #[error("assumption failed: {0}")]
    Assumption(String),
    #[error("search failed: {0}")]
    Search(String),
    #[error("invalid bracket: {0}")]
    Bracket(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("line search hit the feasibility boundary")]
    Boundary,
    #[error("no stabilizing root: {0}")]
    WrongRoot(String),
    #[error("simulation diverged at step {step}")]
    SimDivergence { step: usize },
    #[error("integration failed at step {step}: {detail}")]
    Integration { step: usize, detail: String },
}

/// Coarse grouping used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Precondition,
    Solver,
    Divergence,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::NonFinite(_)
            | Error::Assumption(_)
            | Error::Bracket(_)
            | Error::Domain(_) => ErrorClass::Precondition,
            Error::SimDivergence { .. } | Error::Integration { .. } | Error::Divergence { .. } => {
                ErrorClass::Divergence
            }
            _ => ErrorClass::Solver,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::InfeasibleGamma { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
