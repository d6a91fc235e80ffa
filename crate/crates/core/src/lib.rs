//! Tight lower bounds on the squared Hellinger distance between probability
//! measures with prescribed means and variances.
//!
//! - [`types`]: moment specs, finite discrete pairs, H² and the Bhattacharyya coefficient.
//! - [`bounds`]: the tight bound, its two-point attainer, and the comparison bound.
//! - [`closed_forms`]: Gaussian and shifted-exponential H², and discretization.
//! - [`verifier`]: sampling, multi-start minimization and the equal-means sequence.

pub mod bounds;
pub mod closed_forms;
pub mod error;
pub mod types;
pub mod verifier;

pub use bounds::{
    beta_factors, bhattacharyya_upper_bound, binary_attainer, comparison_bound,
    hellinger_lower_bound, BinaryAttainer, BoundReport,
};
pub use closed_forms::{
    discretize, discretize_pair, gaussian_h2, match_moments_exponential, shifted_exponential_h2,
    DiscreteMarginal, GaussianLaw, Law, ShiftedExponentialLaw,
};
pub use error::{Error, Result};
pub use types::{bhattacharyya, binary_hellinger_sq, hellinger_sq, moments_of, DiscretePair, MomentSpec};
pub use verifier::{
    equal_means_sequence, minimize_h2, run_verification, sample_feasible_pair, RecordKind,
    VerificationConfig, VerificationRecord, VerificationReport,
};
