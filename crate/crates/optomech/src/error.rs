//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptomechError {
    #[error("invalid control profile: {0}")]
    InvalidProfile(String),

    #[error("point violates the hyperboloid constraint: |q^2 - j0^2 + 1| = {defect:.3e} > {tol:.3e}")]
    OffHyperboloid { defect: f64, tol: f64 },

    #[error("state diverged (non-finite component) at t = {t}")]
    Diverged { t: f64 },

    #[error("negative squeezing parameter not allowed: {0}")]
    NegativeSqueezing(f64),

    #[error("final state is not on the target manifold: |q2| = {q2:.3e}, |q3| = {q3:.3e} exceed tol {tol:.3e}")]
    NotOnTargetManifold { q2: f64, q3: f64, tol: f64 },

    #[error("squeezing parameter must be nonnegative, got {0}")]
    NegativeArgument(f64),

    #[error("switch times must be nondecreasing and inside [0, T]: {0}")]
    InvalidSwitchTimes(String),

    #[error("candidate endpoint is infeasible: |q2(T)| = {q2:.3e}, |q3(T)| = {q3:.3e} exceed tol {tol:.3e}")]
    InfeasibleEndpoint { q2: f64, q3: f64, tol: f64 },

    #[error("multiplier recovery is underdetermined: {n_conditions} switch condition(s), need at least 2")]
    Underdetermined { n_conditions: usize },

    #[error("no feasible solution found after {tried} start(s)")]
    NoFeasibleSolution { tried: usize },

    #[error("no root found for structure {structure}")]
    NoRootFound { structure: String },

    #[error("Fock truncation breach: tail mass {tail_mass:.3e} exceeds {limit:.3e}; enlarge na/nb")]
    TruncationBreach { tail_mass: f64, limit: f64 },

    #[error("Fock truncation too small for r = {r}: tanh^(2*na) r = {tail:.3e} > 1e-14")]
    TruncationInadequate { r: f64, tail: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OptomechError>;
