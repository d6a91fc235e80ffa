use thiserror::Error;

use crate::verifier::VerificationRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid discrete pair: {0}")]
    InvalidPair(String),

    #[error("invalid moment specification: {0}")]
    InvalidSpec(String),

    /// The means coincide; no binary attainer exists and the infimum (zero) is not attained.
    #[error("means are equal; the lower bound is the non-attained infimum 0")]
    EqualMeans,

    #[error("degenerate specification: {0}")]
    DegenerateSpec(String),

    /// An attainer mass sits at 0 or 1 so a ratio in the beta factors is 0/0.
    #[error("attainer has a boundary mass (r = {r}, s = {s}); beta factors are undefined")]
    BoundaryAttainer { r: f64, s: f64 },

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("tail mass {tail_mass:e} beyond the truncation radius exceeds {limit:e}")]
    InsufficientCoverage { tail_mass: f64, limit: f64 },

    #[error("no feasible support found after {attempts} attempts")]
    InfeasibleSupport { attempts: usize },

    #[error("invalid verification config: {0}")]
    InvalidConfig(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// No restart met the moment tolerance. Carries the restart with the smallest residual.
    #[error("no restart reached the moment tolerance (best residual {:e})", best.moment_residual)]
    ConvergenceFailure { best: Box<VerificationRecord> },
}
