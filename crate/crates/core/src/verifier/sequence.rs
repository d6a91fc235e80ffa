//! Four-point pairs with equal (zero) means, fixed variances, and H² → 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{binary_hellinger_sq, DiscretePair};

/// Variances closer than this to 1 trigger the rescaled construction.
const UNIT_VARIANCE_TOL: f64 = 1e-6;

/// Construction constants for a pair of target standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceParameters {
    /// Mass ratio `(σ_P'² − 1) / (σ_Q'² − 1)` in the working scale.
    pub xi: f64,
    /// Working-scale variances, both at least 1 and with `σ_Q'² ≠ 1`.
    pub work_var_p: f64,
    pub work_var_q: f64,
    /// Support multiplier mapping the working scale back to the target variances.
    pub support_scale: f64,
}

impl SequenceParameters {
    /// `μ_j = √(1 + j(σ_Q'² − 1))`.
    pub fn outer_point(&self, j: u64) -> f64 {
        (1.0 + j as f64 * (self.work_var_q - 1.0)).sqrt()
    }

    /// Smallest index with all masses in `[0, 1]`.
    pub fn min_index(&self) -> u64 {
        (self.xi.ceil() as u64).max(1)
    }

    /// `h²(ξ/j, 1/j)`, the closed-form distance of the `j`-th pair.
    pub fn binary_h2(&self, j: u64) -> f64 {
        let j = j as f64;
        binary_hellinger_sq(self.xi / j, 1.0 / j)
    }
}

fn check_sd(name: &str, sd: f64) -> Result<()> {
    if !(sd.is_finite() && sd > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "{name} must be positive and finite, got {sd}"
        )));
    }
    Ok(())
}

pub fn sequence_parameters(sigma_p: f64, sigma_q: f64) -> Result<SequenceParameters> {
    check_sd("sigma_p", sigma_p)?;
    check_sd("sigma_q", sigma_q)?;
    let (var_p, var_q) = (sigma_p * sigma_p, sigma_q * sigma_q);
    let min_var = var_p.min(var_q);

    // Rescale so both working variances exceed 1 when the smaller one is below 1,
    // or when σ_Q² = 1 would make ξ divide by zero.
    let (work_var_p, work_var_q, support_scale) =
        if min_var < 1.0 || (var_q - 1.0).abs() < UNIT_VARIANCE_TOL {
            let factor = 2.0 / min_var;
            (var_p * factor, var_q * factor, (min_var / 2.0).sqrt())
        } else {
            (var_p, var_q, 1.0)
        };

    Ok(SequenceParameters {
        xi: (work_var_p - 1.0) / (work_var_q - 1.0),
        work_var_p,
        work_var_q,
        support_scale,
    })
}

/// The `j`-th pair: both means zero, variances `σ_P²` and `σ_Q²`,
/// `H² = h²(ξ/j, 1/j)`.
pub fn equal_means_sequence(sigma_p: f64, sigma_q: f64, j: u64) -> Result<DiscretePair> {
    if j == 0 {
        return Err(Error::InvalidParameters("j must be at least 1".into()));
    }
    let params = sequence_parameters(sigma_p, sigma_q)?;
    let jf = j as f64;
    let inner_p = 0.5 - params.xi / (2.0 * jf);
    let outer_p = params.xi / (2.0 * jf);
    let inner_q = 0.5 - 1.0 / (2.0 * jf);
    let outer_q = 1.0 / (2.0 * jf);
    if !(0.0..=0.5).contains(&inner_p) || !(0.0..=0.5).contains(&outer_p) {
        return Err(Error::InvalidParameters(format!(
            "j = {j} gives masses outside [0, 1] for xi = {}; need j >= {}",
            params.xi,
            params.min_index()
        )));
    }

    let mu = params.outer_point(j);
    let k = params.support_scale;
    DiscretePair::new(
        vec![-mu * k, -k, k, mu * k],
        vec![outer_p, inner_p, inner_p, outer_p],
        vec![outer_q, inner_q, inner_q, outer_q],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{hellinger_sq, moments_of};
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_case() {
        let params = sequence_parameters(3.0, 2.0).unwrap();
        assert_abs_diff_eq!(params.xi, 8.0 / 3.0, epsilon = 1e-15);
        assert_eq!(params.support_scale, 1.0);
        let pair = equal_means_sequence(3.0, 2.0, 100).unwrap();
        assert_abs_diff_eq!(
            hellinger_sq(&pair),
            binary_hellinger_sq(8.0 / 300.0, 0.01),
            epsilon = 1e-12
        );
        let m = moments_of(&pair).unwrap();
        assert_abs_diff_eq!(m.mean_p, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.sigma_p * m.sigma_p, 9.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.sigma_q * m.sigma_q, 4.0, epsilon = 1e-10);
    }

    #[test]
    fn equal_variances_coincide() {
        let pair = equal_means_sequence(2.0, 2.0, 10).unwrap();
        assert_eq!(pair.probs_p(), pair.probs_q());
        assert_eq!(hellinger_sq(&pair), 0.0);
    }

    #[test]
    fn small_and_unit_variances_are_rescaled() {
        for (sp, sq) in [(0.3, 2.0), (2.0, 0.5), (1.5, 1.0), (1.0, 1.0), (0.1, 0.2)] {
            let params = sequence_parameters(sp, sq).unwrap();
            assert!(params.work_var_p >= 1.0 && params.work_var_q > 1.0);
            let j = params.min_index().max(3) * 10;
            let pair = equal_means_sequence(sp, sq, j).unwrap();
            let m = moments_of(&pair).unwrap();
            assert_abs_diff_eq!(m.mean_p, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.sigma_p * m.sigma_p, sp * sp, epsilon = 1e-10);
            assert_abs_diff_eq!(m.sigma_q * m.sigma_q, sq * sq, epsilon = 1e-10);
            assert_abs_diff_eq!(hellinger_sq(&pair), params.binary_h2(j), epsilon = 1e-10);
        }
    }

    #[test]
    fn invalid_indices() {
        // xi = 8/3, so j = 2 leaves negative inner masses.
        assert!(matches!(equal_means_sequence(3.0, 2.0, 2), Err(Error::InvalidParameters(_))));
        assert!(equal_means_sequence(3.0, 2.0, 3).is_ok());
        assert!(matches!(equal_means_sequence(3.0, 2.0, 0), Err(Error::InvalidParameters(_))));
        assert!(matches!(equal_means_sequence(-1.0, 2.0, 5), Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn decreasing_in_j() {
        let mut prev = f64::INFINITY;
        let mut j = 10;
        while j <= 10240 {
            let h = hellinger_sq(&equal_means_sequence(3.0, 2.0, j).unwrap());
            assert!(h < prev);
            prev = h;
            j *= 2;
        }
    }
}
