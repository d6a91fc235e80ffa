//! Moment specifications, finite discrete pairs, and divergences evaluated on them.
//!
//! Squared Hellinger distance uses the half-normalized convention
//! `H²(P, Q) = ½ Σ (√pᵢ − √qᵢ)²`, so it lies in `[0, 1]` and equals
//! `1 − ρ(P, Q)` where `ρ = Σ √(pᵢ qᵢ)` is the Bhattacharyya coefficient.
//! Some references drop the ½; multiply by 2 to compare with them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σp = 1` below which a probability vector is silently renormalized.
pub const PROB_TOL: f64 = 1e-12;

/// Negative variances closer than this to zero (relative to the second moment) clamp to zero.
pub const VARIANCE_CLAMP_TOL: f64 = 1e-12;

/// Means and standard deviations of the two marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMomentSpec")]
pub struct MomentSpec {
    pub mean_p: f64,
    pub sigma_p: f64,
    pub mean_q: f64,
    pub sigma_q: f64,
}

#[derive(Deserialize)]
struct RawMomentSpec {
    mean_p: f64,
    sigma_p: f64,
    mean_q: f64,
    sigma_q: f64,
}

impl TryFrom<RawMomentSpec> for MomentSpec {
    type Error = Error;

    fn try_from(raw: RawMomentSpec) -> Result<Self> {
        MomentSpec::new(raw.mean_p, raw.sigma_p, raw.mean_q, raw.sigma_q)
    }
}

impl MomentSpec {
    pub fn new(mean_p: f64, sigma_p: f64, mean_q: f64, sigma_q: f64) -> Result<Self> {
        let spec = MomentSpec {
            mean_p,
            sigma_p,
            mean_q,
            sigma_q,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Build from variances instead of standard deviations.
    pub fn from_variances(mean_p: f64, var_p: f64, mean_q: f64, var_q: f64) -> Result<Self> {
        if var_p.is_nan() || var_q.is_nan() || var_p < 0.0 || var_q < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "variances must be non-negative, got {var_p} and {var_q}"
            )));
        }
        Self::new(mean_p, var_p.sqrt(), mean_q, var_q.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.mean_p, self.sigma_p, self.mean_q, self.sigma_q];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec(format!("non-finite field in {self:?}")));
        }
        if self.sigma_p < 0.0 || self.sigma_q < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "standard deviations must be non-negative, got {} and {}",
                self.sigma_p, self.sigma_q
            )));
        }
        Ok(())
    }

    /// Mean gap `m_P − m_Q`.
    pub fn mean_gap(&self) -> f64 {
        self.mean_p - self.mean_q
    }

    /// Variance gap `σ_Q² − σ_P²`.
    pub fn variance_gap(&self) -> f64 {
        self.sigma_q * self.sigma_q - self.sigma_p * self.sigma_p
    }

    /// Exchange the roles of P and Q.
    pub fn swapped(&self) -> MomentSpec {
        MomentSpec {
            mean_p: self.mean_q,
            sigma_p: self.sigma_q,
            mean_q: self.mean_p,
            sigma_q: self.sigma_p,
        }
    }

    /// Shift-invariant length scale of the problem, `max(|a|, σ_P, σ_Q)`.
    pub fn scale(&self) -> f64 {
        self.mean_gap()
            .abs()
            .max(self.sigma_p)
            .max(self.sigma_q)
    }
}

/// Two probability vectors on a shared, strictly increasing, finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscretePair")]
pub struct DiscretePair {
    support: Vec<f64>,
    #[serde(rename = "p")]
    probs_p: Vec<f64>,
    #[serde(rename = "q")]
    probs_q: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDiscretePair {
    support: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl TryFrom<RawDiscretePair> for DiscretePair {
    type Error = Error;

    fn try_from(raw: RawDiscretePair) -> Result<Self> {
        DiscretePair::new(raw.support, raw.p, raw.q)
    }
}

impl DiscretePair {
    /// Build a pair from possibly unsorted support points.
    ///
    /// Points are sorted and exact duplicates merged by summing their masses.
    /// Each probability vector must sum to one within [`PROB_TOL`]; it is then
    /// rescaled unless the sum is already 1 up to roundoff.
    pub fn new(support: Vec<f64>, probs_p: Vec<f64>, probs_q: Vec<f64>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::InvalidPair("empty support".into()));
        }
        if probs_p.len() != n || probs_q.len() != n {
            return Err(Error::InvalidPair(format!(
                "length mismatch: support {n}, p {}, q {}",
                probs_p.len(),
                probs_q.len()
            )));
        }
        if let Some(u) = support.iter().find(|u| !u.is_finite()) {
            return Err(Error::InvalidPair(format!("non-finite support point {u}")));
        }
        for (name, probs) in [("p", &probs_p), ("q", &probs_q)] {
            if let Some(x) = probs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::InvalidPair(format!(
                    "{name} contains an invalid probability {x}"
                )));
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| support[i].total_cmp(&support[j]));

        let mut merged_u: Vec<f64> = Vec::with_capacity(n);
        let mut merged_p: Vec<f64> = Vec::with_capacity(n);
        let mut merged_q: Vec<f64> = Vec::with_capacity(n);
        for i in order {
            if merged_u.last() == Some(&support[i]) {
                *merged_p.last_mut().unwrap() += probs_p[i];
                *merged_q.last_mut().unwrap() += probs_q[i];
            } else {
                merged_u.push(support[i]);
                merged_p.push(probs_p[i]);
                merged_q.push(probs_q[i]);
            }
        }

        normalize(&mut merged_p, "p")?;
        normalize(&mut merged_q, "q")?;

        Ok(DiscretePair {
            support: merged_u,
            probs_p: merged_p,
            probs_q: merged_q,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs_p(&self) -> &[f64] {
        &self.probs_p
    }

    pub fn probs_q(&self) -> &[f64] {
        &self.probs_q
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// The same pair with P and Q exchanged.
    pub fn swapped(&self) -> DiscretePair {
        DiscretePair {
            support: self.support.clone(),
            probs_p: self.probs_q.clone(),
            probs_q: self.probs_p.clone(),
        }
    }

    /// Total mass, under either marginal, outside the two heaviest locations.
    ///
    /// Consecutive support points no further than `merge_tol` apart count as one
    /// location; locations are ranked by combined mass `pᵢ + qᵢ`.
    pub fn mass_outside_top_two(&self, merge_tol: f64) -> f64 {
        let mut clusters: Vec<(f64, f64)> = Vec::with_capacity(self.len());
        let mut prev: Option<f64> = None;
        for ((u, p), q) in self.support.iter().zip(&self.probs_p).zip(&self.probs_q) {
            match (prev, clusters.last_mut()) {
                (Some(v), Some(last)) if u - v <= merge_tol => {
                    last.0 += p;
                    last.1 += q;
                }
                _ => clusters.push((*p, *q)),
            }
            prev = Some(*u);
        }
        if clusters.len() <= 2 {
            return 0.0;
        }
        clusters.sort_by(|a, b| (b.0 + b.1).total_cmp(&(a.0 + a.1)));
        let off_p: f64 = clusters[2..].iter().map(|c| c.0).sum();
        let off_q: f64 = clusters[2..].iter().map(|c| c.1).sum();
        off_p.max(off_q)
    }
}

fn normalize(probs: &mut [f64], name: &str) -> Result<()> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidPair(format!(
            "{name} sums to {total:.17}, not 1 within {PROB_TOL:e}"
        )));
    }
    // Sums already within roundoff of 1 are left alone so serialized pairs read back unchanged.
    if (total - 1.0).abs() > probs.len() as f64 * f64::EPSILON {
        probs.iter_mut().for_each(|x| *x /= total);
    }
    Ok(())
}

/// Mean and standard deviation of a single probability vector on `support`.
pub(crate) fn marginal_moments(support: &[f64], probs: &[f64]) -> Result<(f64, f64)> {
    let mean: f64 = support.iter().zip(probs).map(|(u, p)| p * u).sum();
    let second: f64 = support.iter().zip(probs).map(|(u, p)| p * u * u).sum();
    // Centered second pass; the raw `E[X²] − m²` is only used to size the clamp window.
    let var: f64 = support
        .iter()
        .zip(probs)
        .map(|(u, p)| p * (u - mean) * (u - mean))
        .sum();
    if var < 0.0 {
        if var < -VARIANCE_CLAMP_TOL * second.max(1.0) {
            return Err(Error::InvalidPair(format!("negative variance {var:e}")));
        }
        return Ok((mean, 0.0));
    }
    Ok((mean, var.sqrt()))
}

/// Means and standard deviations of both marginals.
pub fn moments_of(pair: &DiscretePair) -> Result<MomentSpec> {
    let (mean_p, sigma_p) = marginal_moments(&pair.support, &pair.probs_p)?;
    let (mean_q, sigma_q) = marginal_moments(&pair.support, &pair.probs_q)?;
    MomentSpec::new(mean_p, sigma_p, mean_q, sigma_q)
}

/// Squared Hellinger distance `½ Σ (√pᵢ − √qᵢ)²`.
pub fn hellinger_sq(pair: &DiscretePair) -> f64 {
    let h: f64 = pair
        .probs_p
        .iter()
        .zip(&pair.probs_q)
        .map(|(p, q)| {
            let d = p.sqrt() - q.sqrt();
            d * d
        })
        .sum();
    (0.5 * h).clamp(0.0, 1.0)
}

/// Bhattacharyya coefficient `Σ √(pᵢ qᵢ)`.
pub fn bhattacharyya(pair: &DiscretePair) -> f64 {
    let rho: f64 = pair
        .probs_p
        .iter()
        .zip(&pair.probs_q)
        .map(|(p, q)| (p * q).sqrt())
        .sum();
    rho.clamp(0.0, 1.0)
}

/// Binary squared Hellinger distance between `(r, 1 − r)` and `(s, 1 − s)`.
pub fn binary_hellinger_sq(r: f64, s: f64) -> f64 {
    let d1 = r.sqrt() - s.sqrt();
    let d2 = (1.0 - r).sqrt() - (1.0 - s).sqrt();
    0.5 * (d1 * d1 + d2 * d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(u: &[f64], p: &[f64], q: &[f64]) -> DiscretePair {
        DiscretePair::new(u.to_vec(), p.to_vec(), q.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_two_point_moments() {
        let m = moments_of(&pair(&[0.0, 1.0], &[0.5, 0.5], &[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(m.mean_p, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.sigma_p, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.mean_q, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.sigma_q, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn hellinger_examples() {
        let same = pair(&[-3.0, 0.5, 7.0], &[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]);
        assert_eq!(hellinger_sq(&same), 0.0);
        assert_eq!(bhattacharyya(&same), 1.0);

        let disjoint = pair(&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(hellinger_sq(&disjoint), 1.0);
        assert_eq!(bhattacharyya(&disjoint), 0.0);

        let skew = pair(&[0.0, 1.0], &[0.25, 0.75], &[0.75, 0.25]);
        let expected = 1.0 - 2.0 * 3f64.sqrt() / 4.0;
        assert_abs_diff_eq!(hellinger_sq(&skew), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(hellinger_sq(&skew), 0.133975, epsilon = 1e-6);
        assert_abs_diff_eq!(bhattacharyya(&skew), 0.866025, epsilon = 1e-6);
        assert_abs_diff_eq!(binary_hellinger_sq(0.75, 0.25), expected, epsilon = 1e-15);
    }

    #[test]
    fn duplicates_are_merged_and_sorted() {
        let p = pair(&[2.0, 1.0, 2.0], &[0.25, 0.5, 0.25], &[0.0, 0.5, 0.5]);
        assert_eq!(p.support(), &[1.0, 2.0]);
        assert_eq!(p.probs_p(), &[0.5, 0.5]);
        assert_eq!(p.probs_q(), &[0.5, 0.5]);
    }

    #[test]
    fn off_top_two_mass() {
        let p = pair(
            &[0.0, 1.0, 1.0 + 1e-9, 5.0],
            &[0.5, 0.2, 0.2, 0.1],
            &[0.1, 0.3, 0.3, 0.3],
        );
        assert!((p.mass_outside_top_two(0.0) - 0.6).abs() < 1e-15);
        assert!((p.mass_outside_top_two(1e-6) - 0.3).abs() < 1e-15);
        let two = pair(&[0.0, 1.0], &[0.5, 0.5], &[1.0, 0.0]);
        assert_eq!(two.mass_outside_top_two(0.0), 0.0);
    }

    #[test]
    fn normalization_tolerance() {
        let nearly = DiscretePair::new(vec![0.0, 1.0], vec![0.5, 0.5 + 5e-13], vec![0.5, 0.5]);
        assert!(nearly.is_ok());
        let off = DiscretePair::new(vec![0.0, 1.0], vec![0.5, 0.5 + 1e-9], vec![0.5, 0.5]);
        assert!(matches!(off, Err(Error::InvalidPair(_))));
    }

    #[test]
    fn rejects_bad_pairs() {
        assert!(DiscretePair::new(vec![], vec![], vec![]).is_err());
        assert!(DiscretePair::new(vec![0.0, 1.0], vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscretePair::new(vec![0.0, 1.0], vec![1.5, -0.5], vec![0.5, 0.5]).is_err());
        assert!(DiscretePair::new(vec![0.0, f64::NAN], vec![0.5, 0.5], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(MomentSpec::new(0.0, -1.0, 0.0, 1.0).is_err());
        assert!(MomentSpec::new(f64::NAN, 1.0, 0.0, 1.0).is_err());
        assert!(MomentSpec::new(0.0, f64::INFINITY, 0.0, 1.0).is_err());
        assert!(MomentSpec::from_variances(0.0, -1.0, 0.0, 1.0).is_err());
        let s = MomentSpec::from_variances(10.0, 100.0, 3.0, 9.0).unwrap();
        assert_eq!((s.sigma_p, s.sigma_q), (10.0, 3.0));
    }

    #[test]
    fn point_mass_has_zero_sd() {
        let m = moments_of(&pair(&[0.1, 0.7], &[1.0, 0.0], &[0.0, 1.0])).unwrap();
        assert_eq!(m.sigma_p, 0.0);
        assert_eq!(m.sigma_q, 0.0);
        assert_eq!(m.mean_q, 0.7);
    }

    #[test]
    fn json_field_names() {
        let p = pair(&[0.0, 1.0], &[0.25, 0.75], &[0.5, 0.5]);
        let v = serde_json::to_value(&p).unwrap();
        assert!(v.get("support").is_some() && v.get("p").is_some() && v.get("q").is_some());
        let back: DiscretePair = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);

        let bad = serde_json::json!({"support": [0.0, 1.0], "p": [0.9, 0.9], "q": [0.5, 0.5]});
        assert!(serde_json::from_value::<DiscretePair>(bad).is_err());

        let spec: MomentSpec = serde_json::from_str(
            r#"{"mean_p": 1.0, "sigma_p": 2.0, "mean_q": 0.0, "sigma_q": 1.0}"#,
        )
        .unwrap();
        assert_eq!(spec.sigma_p, 2.0);
        assert!(serde_json::from_str::<MomentSpec>(
            r#"{"mean_p": 1.0, "sigma_p": -2.0, "mean_q": 0.0, "sigma_q": 1.0}"#
        )
        .is_err());
    }
}
