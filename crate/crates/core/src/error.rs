use thiserror::Error;

/// Errors surfaced by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {row} of the transition matrix sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("transition matrix is not ergodic: no positive power up to M^{bound}")]
    NotErgodic { bound: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("linear solver failed: {0}")]
    SolverFailure(String),
    #[error("eigen decomposition failed: {0}")]
    EigenFailure(String),
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("relative entropy undefined: p charges atom {atom} where q vanishes")]
    SupportViolation { atom: usize },
    #[error("no start of the minimizer search converged")]
    EmptyResult,
    #[error("profile too close to a simplex face (min entry {min_entry:e})")]
    BoundaryPoint { min_entry: f64 },
    #[error("volume {n} exceeds the exact-enumeration cap {cap}")]
    VolumeTooLarge { n: usize, cap: usize },
    #[error("neighbourhood carries no mass")]
    ZeroMass,
    #[error("free-energy difference has constant sign on the field window")]
    NoBracket,
    #[error("every sample fell into the undecided set")]
    DegenerateAll,
    #[error("only the disordered solution u = 0 exists at these parameters")]
    NoOrderedPhase,
}

pub type Result<T> = std::result::Result<T, Error>;
