//! Random vertices of the moment polytope on a random finite support.

use rand::Rng;

use super::{moment_residual, VerificationConfig};
use crate::error::{Error, Result};
use crate::types::{moments_of, DiscretePair, MomentSpec};

const MAX_ATTEMPTS: usize = 100;

/// Negative basic-solution components above this are rounding noise.
const NEG_TOL: f64 = 1e-12;

/// Draw a random pair on a shared `n_points` support whose marginals match `spec`.
///
/// Each attempt draws a support, then picks for each marginal the vertex of
/// `{p ≥ 0 : Σp = 1, Σpu = m, Σpu² = σ² + m²}` minimizing a random positive
/// cost. The support always contains one random two-point law per marginal, so
/// both polytopes are non-empty whenever those points fit inside the box.
pub fn sample_feasible_pair(
    spec: &MomentSpec,
    config: &VerificationConfig,
    trial_index: usize,
) -> Result<DiscretePair> {
    sample_on_stream(spec, config, trial_index as u64)
}

pub(crate) fn sample_on_stream(
    spec: &MomentSpec,
    config: &VerificationConfig,
    stream: u64,
) -> Result<DiscretePair> {
    spec.validate()?;
    config.validate()?;
    if config.n_points < 4 {
        return Err(Error::InvalidConfig(format!(
            "sampling needs at least 4 support points, got {}",
            config.n_points
        )));
    }
    if spec.sigma_p == 0.0 && spec.sigma_q == 0.0 {
        return Err(Error::DegenerateSpec(
            "both marginals are point masses; nothing to sample".into(),
        ));
    }
    let radius = config.radius;
    for (m, sd) in [(spec.mean_p, spec.sigma_p), (spec.mean_q, spec.sigma_q)] {
        if m.abs() + 10.0 * sd > radius {
            return Err(Error::InvalidConfig(format!(
                "radius {radius} is smaller than |m| + 10σ = {}",
                m.abs() + 10.0 * sd
            )));
        }
    }

    let mut rng = config.rng(stream);
    let lo = (spec.mean_p - 3.0 * spec.sigma_p)
        .min(spec.mean_q - 3.0 * spec.sigma_q)
        .max(-radius);
    let hi = (spec.mean_p + 3.0 * spec.sigma_p)
        .max(spec.mean_q + 3.0 * spec.sigma_q)
        .min(radius);

    for _ in 0..MAX_ATTEMPTS {
        let Some(support) = draw_support(spec, config.n_points, radius, lo, hi, &mut rng) else {
            continue;
        };
        let cost_p: Vec<f64> = support.iter().map(|_| positive(&mut rng)).collect();
        let cost_q: Vec<f64> = support.iter().map(|_| positive(&mut rng)).collect();
        let Some(p) = cheapest_vertex(&support, spec.mean_p, spec.sigma_p, &cost_p) else {
            continue;
        };
        let Some(q) = cheapest_vertex(&support, spec.mean_q, spec.sigma_q, &cost_q) else {
            continue;
        };
        let Ok(pair) = DiscretePair::new(support, p, q) else {
            continue;
        };
        let Ok(actual) = moments_of(&pair) else {
            continue;
        };
        if moment_residual(spec, &actual) <= config.tol_moments {
            return Ok(pair);
        }
    }
    Err(Error::InfeasibleSupport {
        attempts: MAX_ATTEMPTS,
    })
}

fn positive<R: Rng>(rng: &mut R) -> f64 {
    // Uniform on (0, 1].
    1.0 - rng.gen::<f64>()
}

/// Random two-point law with mean `m` and sd `sd`: mass `r` at the upper point.
fn two_point_law<R: Rng>(m: f64, sd: f64, rng: &mut R) -> [f64; 2] {
    let r = positive(rng).min(1.0 - f64::EPSILON);
    let upper = m + sd * ((1.0 - r) / r).sqrt();
    let lower = m - sd * (r / (1.0 - r)).sqrt();
    [lower, upper]
}

/// Sorted, distinct support points, or `None` if the seeds fall outside the box.
fn draw_support<R: Rng>(
    spec: &MomentSpec,
    n: usize,
    radius: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let mut points: Vec<f64> = Vec::with_capacity(n);
    for (m, sd) in [(spec.mean_p, spec.sigma_p), (spec.mean_q, spec.sigma_q)] {
        points.extend(two_point_law(m, sd, rng));
    }
    if points.iter().any(|u| u.abs() > radius) {
        return None;
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    while points.len() < n {
        let u = if rng.gen_bool(0.5) {
            rng.gen_range(lo..=hi)
        } else {
            rng.gen_range(-radius..=radius)
        };
        if !points.contains(&u) {
            points.push(u);
        }
    }
    points.sort_by(f64::total_cmp);
    Some(points)
}

/// Minimum-cost basic feasible solution of the three moment equations.
///
/// With three constraints every vertex has at most three non-zero masses, so
/// enumerating support triples and solving each 3×3 Vandermonde system in
/// closed form visits every vertex.
fn cheapest_vertex(support: &[f64], mean: f64, sd: f64, cost: &[f64]) -> Option<Vec<f64>> {
    let n = support.len();
    let var = sd * sd;
    // Centered coordinates: E[t] = 0, E[t²] = σ².
    let t: Vec<f64> = support.iter().map(|u| u - mean).collect();

    let mut best: Option<(f64, [usize; 3], [f64; 3])> = None;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let idx = [i, j, k];
                let mut masses = [0.0; 3];
                for (slot, &(a, b, c)) in [(i, j, k), (j, i, k), (k, i, j)].iter().enumerate() {
                    // Lagrange basis: p_a = (σ² + t_b t_c) / ((t_a − t_b)(t_a − t_c))
                    masses[slot] = (var + t[b] * t[c]) / ((t[a] - t[b]) * (t[a] - t[c]));
                }
                if masses.iter().any(|&x| x.is_nan() || x < -NEG_TOL) {
                    continue;
                }
                let masses = masses.map(|x| x.max(0.0));
                let c: f64 = idx.iter().zip(&masses).map(|(&s, x)| cost[s] * x).sum();
                if best.is_none_or(|(bc, _, _)| c < bc) {
                    best = Some((c, idx, masses));
                }
            }
        }
    }

    let (_, idx, masses) = best?;
    let total: f64 = masses.iter().sum();
    let mut probs = vec![0.0; n];
    for (&s, x) in idx.iter().zip(masses) {
        probs[s] = x / total;
    }
    Some(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::hellinger_lower_bound;
    use crate::types::hellinger_sq;

    fn config(n: usize, radius: f64) -> VerificationConfig {
        VerificationConfig {
            n_points: n,
            radius,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn standard_spec_round_trips() {
        let spec = MomentSpec::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let cfg = config(6, 10.0);
        for trial in 0..50 {
            let pair = sample_feasible_pair(&spec, &cfg, trial).unwrap();
            assert_eq!(pair.len(), 6);
            let m = moments_of(&pair).unwrap();
            assert!(moment_residual(&spec, &m) <= 1e-8, "{m:?}");
        }
    }

    #[test]
    fn samples_respect_the_bound() {
        let spec = MomentSpec::from_variances(10.0, 100.0, 3.0, 9.0).unwrap();
        let cfg = config(6, 200.0);
        let bound = hellinger_lower_bound(&spec).unwrap();
        for trial in 0..500 {
            let pair = sample_feasible_pair(&spec, &cfg, trial).unwrap();
            assert!(hellinger_sq(&pair) >= bound - 1e-9);
        }
    }

    #[test]
    fn one_point_mass_marginal() {
        let spec = MomentSpec::new(0.5, 0.0, 0.0, 1.0).unwrap();
        let pair = sample_feasible_pair(&spec, &config(5, 20.0), 0).unwrap();
        let m = moments_of(&pair).unwrap();
        assert!(m.sigma_p < 1e-7 && (m.mean_p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let point_masses = MomentSpec::new(0.0, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            sample_feasible_pair(&point_masses, &config(6, 10.0), 0),
            Err(Error::DegenerateSpec(_))
        ));
        let spec = MomentSpec::new(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            sample_feasible_pair(&spec, &config(3, 10.0), 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            sample_feasible_pair(&spec, &config(6, 5.0), 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn trials_differ_and_repeat() {
        let spec = MomentSpec::new(0.0, 1.0, 0.5, 2.0).unwrap();
        let cfg = config(6, 50.0);
        let a = sample_feasible_pair(&spec, &cfg, 0).unwrap();
        let b = sample_feasible_pair(&spec, &cfg, 1).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, sample_feasible_pair(&spec, &cfg, 0).unwrap());
    }

    #[test]
    fn vertex_solver_matches_two_point_law() {
        // Support {-1, 0, 1}, mean 0, sd 1: the only feasible point is ½ at ±1.
        let p = cheapest_vertex(&[-1.0, 0.0, 1.0], 0.0, 1.0, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.0, 0.5]);
        assert!(cheapest_vertex(&[-1.0, 0.0, 1.0], 0.0, 2.0, &[1.0; 3]).is_none());
    }
}
