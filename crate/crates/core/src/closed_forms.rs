//! Closed-form H² for Gaussian and shifted-exponential laws, moment matching
//! for the exponential family, and CDF-based discretization onto a finite grid.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::types::{marginal_moments, DiscretePair, MomentSpec};

/// Largest tail mass a discretization may discard.
pub const TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::InvalidLaw(format!(
                "gaussian needs finite mean and sd > 0, got ({mean}, {sd})"
            )));
        }
        Ok(GaussianLaw { mean, sd })
    }

    /// Survival function `P(X > x)`.
    fn survival(&self, x: f64) -> f64 {
        0.5 * erfc((x - self.mean) / (self.sd * std::f64::consts::SQRT_2))
    }

    /// `P(lo < X ≤ hi)` without cancellation in either tail.
    fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if lo >= self.mean {
            self.survival(lo) - self.survival(hi)
        } else {
            // Mirror so the subtraction happens in the left tail.
            let mirrored = GaussianLaw {
                mean: -self.mean,
                sd: self.sd,
            };
            mirrored.survival(-hi) - mirrored.survival(-lo)
        }
        .max(0.0)
    }
}

/// `X = shift + E` where `E` is exponential with mean `scale`.
/// Mean `shift + scale`, variance `scale²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedExponentialLaw {
    pub scale: f64,
    pub shift: f64,
}

impl ShiftedExponentialLaw {
    pub fn new(scale: f64, shift: f64) -> Result<Self> {
        if !(scale.is_finite() && shift.is_finite() && scale > 0.0) {
            return Err(Error::InvalidLaw(format!(
                "shifted exponential needs scale > 0 and finite shift, got ({scale}, {shift})"
            )));
        }
        Ok(ShiftedExponentialLaw { scale, shift })
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.scale
    }

    /// Survival function, evaluated in coordinates relative to the shift.
    fn survival(&self, x: f64) -> f64 {
        let y = x - self.shift;
        if y <= 0.0 {
            1.0
        } else {
            (-y / self.scale).exp()
        }
    }

    fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.shift);
        if hi <= lo {
            return 0.0;
        }
        // S(lo) − S(hi) = S(lo)·(1 − e^{−(hi − lo)/scale})
        -self.survival(lo) * (-(hi - lo) / self.scale).exp_m1()
    }
}

/// One of the two continuous families that admit closed-form H².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Law {
    Gaussian(GaussianLaw),
    ShiftedExponential(ShiftedExponentialLaw),
}

impl Law {
    pub fn mean(&self) -> f64 {
        match self {
            Law::Gaussian(g) => g.mean,
            Law::ShiftedExponential(e) => e.mean(),
        }
    }

    pub fn sd(&self) -> f64 {
        match self {
            Law::Gaussian(g) => g.sd,
            Law::ShiftedExponential(e) => e.scale,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Law::Gaussian(g) => GaussianLaw::new(g.mean, g.sd).map(|_| ()),
            Law::ShiftedExponential(e) => ShiftedExponentialLaw::new(e.scale, e.shift).map(|_| ()),
        }
    }

    fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Law::Gaussian(g) => g.interval_mass(lo, hi),
            Law::ShiftedExponential(e) => e.interval_mass(lo, hi),
        }
    }
}

impl From<GaussianLaw> for Law {
    fn from(g: GaussianLaw) -> Self {
        Law::Gaussian(g)
    }
}

impl From<ShiftedExponentialLaw> for Law {
    fn from(e: ShiftedExponentialLaw) -> Self {
        Law::ShiftedExponential(e)
    }
}

pub fn gaussian_h2(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    GaussianLaw::new(p.mean, p.sd)?;
    GaussianLaw::new(q.mean, q.sd)?;
    let var_sum = p.sd * p.sd + q.sd * q.sd;
    let gap = p.mean - q.mean;
    let coef = (2.0 * p.sd * q.sd / var_sum).sqrt();
    let h2 = 1.0 - coef * (-gap * gap / (4.0 * var_sum)).exp();
    Ok(h2.clamp(0.0, 1.0))
}

pub fn shifted_exponential_h2(p: &ShiftedExponentialLaw, q: &ShiftedExponentialLaw) -> Result<f64> {
    ShiftedExponentialLaw::new(p.scale, p.shift)?;
    ShiftedExponentialLaw::new(q.scale, q.shift)?;
    let coef = 2.0 * (p.scale * q.scale).sqrt() / (p.scale + q.scale);
    // The overlap starts at the larger shift and decays at the other law's rate.
    let decay = if p.shift >= q.shift {
        (p.shift - q.shift) / (2.0 * q.scale)
    } else {
        (q.shift - p.shift) / (2.0 * p.scale)
    };
    Ok((1.0 - coef * (-decay).exp()).clamp(0.0, 1.0))
}

/// Shifted exponentials with the spec's means and variances.
pub fn match_moments_exponential(
    spec: &MomentSpec,
) -> Result<(ShiftedExponentialLaw, ShiftedExponentialLaw)> {
    spec.validate()?;
    if spec.sigma_p == 0.0 || spec.sigma_q == 0.0 {
        return Err(Error::DegenerateSpec(
            "exponential laws need strictly positive standard deviations".into(),
        ));
    }
    Ok((
        ShiftedExponentialLaw::new(spec.sigma_p, spec.mean_p - spec.sigma_p)?,
        ShiftedExponentialLaw::new(spec.sigma_q, spec.mean_q - spec.sigma_q)?,
    ))
}

/// A single law discretized onto bin midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    /// Mass of the law outside the grid, discarded before renormalizing.
    pub tail_mass: f64,
    /// `|mean(discrete) − mean(law)|`.
    pub mean_residual: f64,
    /// `|var(discrete) − var(law)|`.
    pub variance_residual: f64,
}

fn check_grid(lo: f64, hi: f64, bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::InvalidParameters(format!("need at least 2 bins, got {bins}")));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidParameters(format!("invalid grid [{lo}, {hi}]")));
    }
    Ok(())
}

fn discretize_on(law: &Law, lo: f64, hi: f64, bins: usize) -> Result<DiscreteMarginal> {
    law.validate()?;
    check_grid(lo, hi, bins)?;
    let width = (hi - lo) / bins as f64;
    let edge = |i: usize| if i == bins { hi } else { lo + width * i as f64 };

    let mut support = Vec::with_capacity(bins);
    let mut probs = Vec::with_capacity(bins);
    for i in 0..bins {
        let (a, b) = (edge(i), edge(i + 1));
        support.push(0.5 * (a + b));
        probs.push(law.interval_mass(a, b));
    }
    let covered: f64 = probs.iter().sum();
    let tail_mass = (1.0 - covered).max(0.0);
    if tail_mass > TAIL_TOL {
        return Err(Error::InsufficientCoverage {
            tail_mass,
            limit: TAIL_TOL,
        });
    }
    probs.iter_mut().for_each(|p| *p /= covered);

    let (mean, sd) = marginal_moments(&support, &probs)?;
    let law_sd = law.sd();
    Ok(DiscreteMarginal {
        mean_residual: (mean - law.mean()).abs(),
        variance_residual: (sd * sd - law_sd * law_sd).abs(),
        support,
        probs,
        tail_mass,
    })
}

/// Discretize `law` into `bins` equal bins on `[mean − radius, mean + radius]`,
/// with bin masses taken from CDF differences.
pub fn discretize(law: &Law, truncation_radius: f64, bins: usize) -> Result<DiscreteMarginal> {
    if !(truncation_radius > 0.0 && truncation_radius.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "truncation radius must be positive, got {truncation_radius}"
        )));
    }
    let center = law.mean();
    discretize_on(law, center - truncation_radius, center + truncation_radius, bins)
}

/// Both laws discretized on one shared grid spanning
/// `[min(mean) − radius, max(mean) + radius]`.
pub fn discretize_pair(
    p: &Law,
    q: &Law,
    truncation_radius: f64,
    bins: usize,
) -> Result<(DiscretePair, DiscreteMarginal, DiscreteMarginal)> {
    if !(truncation_radius > 0.0 && truncation_radius.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "truncation radius must be positive, got {truncation_radius}"
        )));
    }
    let lo = p.mean().min(q.mean()) - truncation_radius;
    let hi = p.mean().max(q.mean()) + truncation_radius;
    let dp = discretize_on(p, lo, hi, bins)?;
    let dq = discretize_on(q, lo, hi, bins)?;
    let pair = DiscretePair::new(dp.support.clone(), dp.probs.clone(), dq.probs.clone())?;
    Ok((pair, dp, dq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::hellinger_sq;
    use approx::assert_abs_diff_eq;

    fn spec(mp: f64, vp: f64, mq: f64, vq: f64) -> MomentSpec {
        MomentSpec::from_variances(mp, vp, mq, vq).unwrap()
    }

    fn gaussians(s: &MomentSpec) -> (GaussianLaw, GaussianLaw) {
        (
            GaussianLaw::new(s.mean_p, s.sigma_p).unwrap(),
            GaussianLaw::new(s.mean_q, s.sigma_q).unwrap(),
        )
    }

    #[test]
    fn gaussian_reference_values() {
        let (p, q) = gaussians(&spec(10.0, 100.0, 3.0, 9.0));
        assert_abs_diff_eq!(gaussian_h2(&p, &q).unwrap(), 0.337, epsilon = 5e-4);
        let (p, q) = gaussians(&spec(20.0, 30.0, 10.0, 20.0));
        assert_abs_diff_eq!(gaussian_h2(&p, &q).unwrap(), 0.400, epsilon = 5e-4);
        assert_eq!(gaussian_h2(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_equal_sd_reduction() {
        let p = GaussianLaw::new(1.0, 2.0).unwrap();
        let q = GaussianLaw::new(-2.0, 2.0).unwrap();
        let expected = 1.0 - (-9.0f64 / (8.0 * 4.0)).exp();
        assert_abs_diff_eq!(gaussian_h2(&p, &q).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn exponential_reference_values() {
        let (p, q) = match_moments_exponential(&spec(10.0, 100.0, 3.0, 9.0)).unwrap();
        assert_eq!((p.scale, q.scale, p.shift, q.shift), (10.0, 3.0, 0.0, 0.0));
        assert_abs_diff_eq!(shifted_exponential_h2(&p, &q).unwrap(), 0.157, epsilon = 5e-4);

        let (p, q) = match_moments_exponential(&spec(20.0, 30.0, 10.0, 20.0)).unwrap();
        assert_eq!(p.scale, 30f64.sqrt());
        assert_eq!(q.scale, 20f64.sqrt());
        assert_eq!(p.shift, 20.0 - 30f64.sqrt());
        assert_eq!(q.shift, 10.0 - 20f64.sqrt());
        assert_abs_diff_eq!(p.mean(), 20.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.scale * p.scale, 30.0, epsilon = 1e-13);
        assert_abs_diff_eq!(shifted_exponential_h2(&p, &q).unwrap(), 0.636, epsilon = 5e-4);
        assert_eq!(shifted_exponential_h2(&p, &p).unwrap(), 0.0);

        let (p, q) = match_moments_exponential(&MomentSpec::new(1.0, 1.0, 2.0, 1.0).unwrap()).unwrap();
        assert_eq!((p.scale, q.scale, p.shift, q.shift), (1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn exponential_branches_agree_at_equal_shift() {
        let p = ShiftedExponentialLaw::new(2.0, 1.0).unwrap();
        let q = ShiftedExponentialLaw::new(5.0, 1.0).unwrap();
        let expected = 1.0 - 2.0 * 10f64.sqrt() / 7.0;
        assert_abs_diff_eq!(shifted_exponential_h2(&p, &q).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted_exponential_h2(&q, &p).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_exponential_match() {
        let s = MomentSpec::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(match_moments_exponential(&s), Err(Error::DegenerateSpec(_))));
    }

    #[test]
    fn invalid_laws() {
        assert!(GaussianLaw::new(0.0, 0.0).is_err());
        assert!(ShiftedExponentialLaw::new(-1.0, 0.0).is_err());
        let bad = GaussianLaw { mean: 0.0, sd: -1.0 };
        assert!(matches!(gaussian_h2(&bad, &bad), Err(Error::InvalidLaw(_))));
    }

    #[test]
    fn standard_gaussian_discretization() {
        let law = Law::from(GaussianLaw::new(0.0, 1.0).unwrap());
        let d = discretize(&law, 8.0, 4096).unwrap();
        assert_eq!(d.support.len(), 4096);
        assert!(d.mean_residual < 1e-8, "{}", d.mean_residual);
        assert!(d.variance_residual < 1e-5, "{}", d.variance_residual);
    }

    #[test]
    fn exponential_discretization() {
        let law = Law::from(ShiftedExponentialLaw::new(1.0, 0.0).unwrap());
        let d = discretize(&law, 40.0, 8192).unwrap();
        assert!(d.mean_residual < 1e-4, "{}", d.mean_residual);
    }

    #[test]
    fn coverage_is_enforced() {
        let law = Law::from(GaussianLaw::new(0.0, 1.0).unwrap());
        assert!(matches!(
            discretize(&law, 3.0, 100),
            Err(Error::InsufficientCoverage { .. })
        ));
        assert!(matches!(discretize(&law, 8.0, 1), Err(Error::InvalidParameters(_))));
        assert!(matches!(discretize(&law, -1.0, 10), Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn identical_discretized_laws() {
        let law = Law::from(GaussianLaw::new(2.0, 0.5).unwrap());
        let (pair, _, _) = discretize_pair(&law, &law, 6.0, 512).unwrap();
        assert_eq!(hellinger_sq(&pair), 0.0);
    }
}
