//! Tight lower bound on H² under mean/variance constraints, the two-point pair
//! attaining it, and the comparison bound with its sandwich factors.
//!
//! With `a = m_P − m_Q` and `x = a² / (a² + (σ_P + σ_Q)²)`, every pair with the
//! prescribed moments satisfies `H²(P, Q) ≥ 1 − √(1 − x)`, and the unique
//! two-point pair with those moments achieves equality. For `a = 0` the
//! infimum is zero and is not attained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DiscretePair, MomentSpec};

/// The unique two-point pair with prescribed moments.
///
/// P puts mass `r` on `u1` and `1 − r` on `u2`; Q puts `s` on `u1` and `1 − s` on `u2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryAttainer {
    pub r: f64,
    pub s: f64,
    /// `1 − r` and `1 − s`, kept separately so tiny masses survive rounding.
    pub one_minus_r: f64,
    pub one_minus_s: f64,
    pub u1: f64,
    pub u2: f64,
    /// Mean gap `m_P − m_Q`.
    pub a: f64,
    /// Variance gap `σ_Q² − σ_P²`.
    pub b: f64,
    pub v: f64,
}

impl BinaryAttainer {
    pub fn pair(&self) -> DiscretePair {
        DiscretePair::new(
            vec![self.u2, self.u1],
            vec![self.one_minus_r, self.r],
            vec![self.one_minus_s, self.s],
        )
        .expect("attainer masses are valid probabilities")
    }

    /// The alternate sign branch: `(r, s, u1, u2) → (1 − r, 1 − s, u2, u1)`.
    /// Describes the same pair of measures.
    pub fn relabeled(&self) -> BinaryAttainer {
        BinaryAttainer {
            r: self.one_minus_r,
            s: self.one_minus_s,
            one_minus_r: self.r,
            one_minus_s: self.s,
            u1: self.u2,
            u2: self.u1,
            ..*self
        }
    }

    /// `h²(r, s)` evaluated directly from the masses.
    pub fn binary_h2(&self) -> f64 {
        let d1 = self.r.sqrt() - self.s.sqrt();
        let d2 = self.one_minus_r.sqrt() - self.one_minus_s.sqrt();
        0.5 * (d1 * d1 + d2 * d2)
    }
}

/// `v = √((a² + (σ_P+σ_Q)²)(a² + (σ_P−σ_Q)²)) / (2|a|)`, the factored form that
/// avoids overflow of `b² + 2a²(σ_P²+σ_Q²) + a⁴` and cancellation for small `a`.
fn v_factor(a: f64, sigma_p: f64, sigma_q: f64) -> f64 {
    let sum = sigma_p + sigma_q;
    let diff = sigma_p - sigma_q;
    let plus = a.hypot(sum);
    let minus = a.hypot(diff);
    plus * minus / (2.0 * a.abs())
}

/// Split `½ + t` into `(x, 1 − x)` using `x(1 − x) = product` for the smaller side.
fn stable_masses(t: f64, product: f64) -> (f64, f64) {
    let big = 0.5 + t.abs();
    let small = (product / big).min(0.5);
    if t >= 0.0 {
        (big.min(1.0), small)
    } else {
        (small, big.min(1.0))
    }
}

/// Construct the two-point attainer for a spec with distinct means.
pub fn binary_attainer(spec: &MomentSpec) -> Result<BinaryAttainer> {
    spec.validate()?;
    let a = spec.mean_gap();
    if a == 0.0 {
        return Err(Error::EqualMeans);
    }
    if spec.sigma_p == 0.0 && spec.sigma_q > 0.0 {
        // P is a point mass, so the P-based support formula collapses. Build from Q and relabel.
        let mirrored = binary_attainer(&spec.swapped())?;
        return Ok(BinaryAttainer {
            r: mirrored.s,
            s: mirrored.r,
            one_minus_r: mirrored.one_minus_s,
            one_minus_s: mirrored.one_minus_r,
            u1: mirrored.u1,
            u2: mirrored.u2,
            a,
            b: spec.variance_gap(),
            v: mirrored.v,
        });
    }

    let b = spec.variance_gap();
    let (sp, sq) = (spec.sigma_p, spec.sigma_q);
    let v = v_factor(a, sp, sq);
    let denom = 4.0 * a * v;
    let four_v2 = 4.0 * v * v;

    let (r, one_minus_r) = stable_masses((b + a * a) / denom, sp * sp / four_v2);
    let (s, one_minus_s) = stable_masses((b - a * a) / denom, sq * sq / four_v2);

    let (u1, u2) = if sp == 0.0 {
        // Both laws are point masses: r and s are 0/1 and P's atom sits wherever r puts it.
        if r >= 0.5 {
            (spec.mean_p, spec.mean_q)
        } else {
            (spec.mean_q, spec.mean_p)
        }
    } else {
        // √((1 − r)σ²/r) = σ²/(2 v r) because r(1 − r) = σ²/(4v²).
        (
            spec.mean_p + sp * sp / (2.0 * v * r),
            spec.mean_p - sp * sp / (2.0 * v * one_minus_r),
        )
    };

    let attainer = BinaryAttainer {
        r,
        s,
        one_minus_r,
        one_minus_s,
        u1,
        u2,
        a,
        b,
        v,
    };
    debug_assert!(
        (0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&s),
        "attainer masses outside [0, 1]: {attainer:?}"
    );
    Ok(attainer)
}

/// `x = a² / (a² + (σ_P + σ_Q)²)`, in `[0, 1]`.
fn overlap_ratio(spec: &MomentSpec) -> f64 {
    let a = spec.mean_gap();
    let sum = spec.sigma_p + spec.sigma_q;
    if a == 0.0 {
        return 0.0;
    }
    // a² / (a² + S²) = 1 / (1 + (S/a)²), robust for large and tiny |a|.
    let ratio = sum / a;
    1.0 / (1.0 + ratio * ratio)
}

/// Greatest lower bound of H² over all pairs with the given moments.
pub fn hellinger_lower_bound(spec: &MomentSpec) -> Result<f64> {
    spec.validate()?;
    let x = overlap_ratio(spec);
    Ok(x / (1.0 + (1.0 - x).sqrt()))
}

/// Least upper bound of the Bhattacharyya coefficient, `1 − hellinger_lower_bound`.
pub fn bhattacharyya_upper_bound(spec: &MomentSpec) -> Result<f64> {
    Ok(1.0 - hellinger_lower_bound(spec)?)
}

/// Comparison bound `l = a² / (2(a² + 2(σ_P² + σ_Q²)))`.
pub fn comparison_bound(spec: &MomentSpec) -> Result<f64> {
    spec.validate()?;
    let a = spec.mean_gap();
    if a == 0.0 {
        return Ok(0.0);
    }
    let var_sum = spec.sigma_p * spec.sigma_p + spec.sigma_q * spec.sigma_q;
    let ratio = var_sum / (a * a);
    Ok(0.5 / (1.0 + 2.0 * ratio))
}

/// `g(x) = (1 + x) / (1 + √x)²`, decreasing from `g(0) = 1` to `g(1) = ½`, then back toward 1.
pub fn g_ratio(x: f64) -> f64 {
    if x.is_infinite() {
        return 1.0;
    }
    let root = 1.0 + x.sqrt();
    (1.0 + x) / (root * root)
}

/// Sandwich factors `(β_min, β_max)` with `β_min·l ≤ h²(r, s) ≤ β_max·l`.
pub fn beta_factors(spec: &MomentSpec) -> Result<(f64, f64)> {
    let att = binary_attainer(spec)?;
    beta_factors_from(&att)
}

pub(crate) fn beta_factors_from(att: &BinaryAttainer) -> Result<(f64, f64)> {
    let (r, s) = (att.r, att.s);
    if r <= 0.0 || att.one_minus_r <= 0.0 {
        return Err(Error::BoundaryAttainer { r, s });
    }
    let g1 = g_ratio(s / r);
    let g2 = g_ratio(att.one_minus_s / att.one_minus_r);
    Ok((2.0 * g1.min(g2), 2.0 * g1.max(g2)))
}

/// All bounds and factors for one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub spec: MomentSpec,
    pub hellinger_lb: f64,
    pub bhattacharyya_ub: f64,
    pub comparison_lb: f64,
    /// Absent for equal means or a boundary attainer.
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    /// Absent exactly when the means are equal.
    pub attainer: Option<BinaryAttainer>,
}

impl BoundReport {
    pub fn new(spec: &MomentSpec) -> Result<BoundReport> {
        let hellinger_lb = hellinger_lower_bound(spec)?;
        let comparison_lb = comparison_bound(spec)?;
        let attainer = match binary_attainer(spec) {
            Ok(att) => Some(att),
            Err(Error::EqualMeans) => None,
            Err(e) => return Err(e),
        };
        let betas = attainer.as_ref().and_then(|att| beta_factors_from(att).ok());
        Ok(BoundReport {
            spec: *spec,
            hellinger_lb,
            bhattacharyya_ub: 1.0 - hellinger_lb,
            comparison_lb,
            beta_min: betas.map(|b| b.0),
            beta_max: betas.map(|b| b.1),
            attainer,
        })
    }
}
