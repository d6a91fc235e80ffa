//! Multi-start local minimization of H² over pairs on `n` free support points.
//!
//! Variables are `wᵢ = √pᵢ`, `zᵢ = √qᵢ` and the support points `uᵢ`. The problem
//!
//! ```text
//! minimize  −Σ wᵢ zᵢ
//! s.t.      Σ wᵢ² uᵢᵏ = E_P[Xᵏ],  Σ zᵢ² uᵢᵏ = E_Q[Xᵏ]   (k = 0, 1, 2)
//!           0 ≤ wᵢ, zᵢ ≤ 1,  |uᵢ| ≤ R
//! ```
//!
//! is solved by an augmented Lagrangian outer loop whose box-constrained
//! subproblems use projected gradient steps with Barzilai-Borwein step sizes and
//! a non-monotone backtracking line search. Everything runs in standardized
//! coordinates `t = (u − c) / scale` so the constraints are O(1).

use log::warn;
use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rayon::prelude::*;

use super::sampling::sample_on_stream;
use super::sequence::{equal_means_sequence, sequence_parameters};
use super::{RecordKind, VerificationConfig, VerificationRecord};
use crate::bounds::binary_attainer;
use crate::error::{Error, Result};
use crate::types::{DiscretePair, MomentSpec};

const MAX_OUTER: usize = 50;
const MAX_INNER: usize = 2000;
const INITIAL_PENALTY: f64 = 10.0;
const MAX_PENALTY: f64 = 1e12;
const NONMONOTONE_MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const TIE_TOL: f64 = 1e-10;

/// RNG streams for restarts start here; lower streams belong to sampled trials.
const RESTART_STREAM_BASE: u64 = 1 << 48;

/// Result of every restart plus the selected best one.
#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub best: VerificationRecord,
    pub restarts: Vec<VerificationRecord>,
}

/// Best feasible local minimum over `n_restarts` starts.
pub fn minimize_h2(spec: &MomentSpec, config: &VerificationConfig) -> Result<VerificationRecord> {
    minimize_h2_all(spec, config).map(|o| o.best)
}

/// Like [`minimize_h2`] but keeps every restart's final record.
///
/// Restart 0 starts from a known construction: the two-point attainer padded
/// with zero-mass points, or for equal means the four-point vanishing sequence.
/// The remaining restarts start from sampled feasible pairs (or random points
/// when the support is too small to sample).
pub fn minimize_h2_all(spec: &MomentSpec, config: &VerificationConfig) -> Result<OptimizationOutcome> {
    spec.validate()?;
    config.validate()?;
    let problem = Problem::new(spec, config);
    let anchor = problem.anchor_start(spec, config)?;

    let attempts: Vec<Result<VerificationRecord>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|k| {
            let (start, warm) = match (k, &anchor) {
                (0, Some(x)) => (x.clone(), true),
                _ => (problem.random_start(spec, config, RESTART_STREAM_BASE + k as u64), false),
            };
            let x = problem.solve(start, warm, config.tol_moments);
            problem.record(spec, config, &x)
        })
        .collect();
    let mut restarts = Vec::with_capacity(attempts.len());
    let mut first_error = None;
    for attempt in attempts {
        match attempt {
            Ok(rec) => restarts.push(rec),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if restarts.is_empty() {
        return Err(first_error.expect("at least one restart"));
    }

    for (k, rec) in restarts.iter().enumerate() {
        if rec.feasible && rec.touches_box {
            warn!("restart {k} converged onto the box |u| = {}; treat as inconclusive", config.radius);
        }
    }

    // Restarts within roundoff of the lowest H² are ties; prefer the most concentrated.
    let lowest = restarts
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.achieved_h2)
        .min_by(f64::total_cmp);
    let best = lowest.and_then(|h| {
        restarts
            .iter()
            .filter(|r| r.feasible && r.achieved_h2 <= h + TIE_TOL)
            .min_by(|a, b| a.off_top2_mass.total_cmp(&b.off_top2_mass))
            .cloned()
    });
    match best {
        Some(best) => Ok(OptimizationOutcome { best, restarts }),
        None => {
            let closest = restarts
                .iter()
                .min_by(|a, b| a.moment_residual.total_cmp(&b.moment_residual))
                .cloned()
                .expect("at least one restart");
            Err(Error::ConvergenceFailure {
                best: Box::new(closest),
            })
        }
    }
}

/// The standardized problem. Vectors are laid out as `[w; z; t]`.
struct Problem {
    n: usize,
    center: f64,
    scale: f64,
    t_lo: f64,
    t_hi: f64,
    /// `(1, E_P[t], E_P[t²], 1, E_Q[t], E_Q[t²])` in standardized coordinates.
    targets: [f64; 6],
}

impl Problem {
    fn new(spec: &MomentSpec, config: &VerificationConfig) -> Self {
        let center = 0.5 * (spec.mean_p + spec.mean_q);
        let scale = match spec.scale() {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        let std = |m: f64| (m - center) / scale;
        let (mp, mq) = (std(spec.mean_p), std(spec.mean_q));
        let (sp, sq) = (spec.sigma_p / scale, spec.sigma_q / scale);
        Problem {
            n: config.n_points,
            center,
            scale,
            t_lo: std(-config.radius),
            t_hi: std(config.radius),
            targets: [1.0, mp, sp * sp + mp * mp, 1.0, mq, sq * sq + mq * mq],
        }
    }

    fn to_t(&self, u: f64) -> f64 {
        (u - self.center) / self.scale
    }

    fn to_u(&self, t: f64) -> f64 {
        self.center + self.scale * t
    }

    fn project(&self, x: &mut [f64]) {
        let n = self.n;
        for v in &mut x[..2 * n] {
            *v = v.clamp(0.0, 1.0);
        }
        for v in &mut x[2 * n..] {
            *v = v.clamp(self.t_lo, self.t_hi);
        }
    }

    fn constraints(&self, x: &[f64]) -> [f64; 6] {
        let n = self.n;
        let (w, z, t) = (&x[..n], &x[n..2 * n], &x[2 * n..]);
        let mut c = [0.0; 6];
        for i in 0..n {
            let (w2, z2, ti) = (w[i] * w[i], z[i] * z[i], t[i]);
            c[0] += w2;
            c[1] += w2 * ti;
            c[2] += w2 * ti * ti;
            c[3] += z2;
            c[4] += z2 * ti;
            c[5] += z2 * ti * ti;
        }
        for (ck, target) in c.iter_mut().zip(self.targets) {
            *ck -= target;
        }
        c
    }

    /// Rows are constraint gradients.
    fn jacobian(&self, x: &[f64]) -> Vec<[f64; 6]> {
        let n = self.n;
        let (w, z, t) = (&x[..n], &x[n..2 * n], &x[2 * n..]);
        let mut jac = vec![[0.0; 6]; 3 * n];
        for i in 0..n {
            let (wi, zi, ti) = (w[i], z[i], t[i]);
            jac[i][0] = 2.0 * wi;
            jac[i][1] = 2.0 * wi * ti;
            jac[i][2] = 2.0 * wi * ti * ti;
            jac[n + i][3] = 2.0 * zi;
            jac[n + i][4] = 2.0 * zi * ti;
            jac[n + i][5] = 2.0 * zi * ti * ti;
            jac[2 * n + i][1] = wi * wi;
            jac[2 * n + i][2] = 2.0 * wi * wi * ti;
            jac[2 * n + i][4] = zi * zi;
            jac[2 * n + i][5] = 2.0 * zi * zi * ti;
        }
        jac
    }

    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut f = 0.0;
        for i in 0..n {
            f -= x[i] * x[n + i];
            grad[i] = -x[n + i];
            grad[n + i] = -x[i];
        }
        f
    }

    /// Augmented Lagrangian value, writing its gradient into `grad`.
    fn lagrangian(&self, x: &[f64], lambda: &[f64; 6], rho: f64, grad: &mut [f64]) -> f64 {
        let n = self.n;
        let mut value = self.objective_grad(x, grad);
        let c = self.constraints(x);
        let mut coef = [0.0; 6];
        for k in 0..6 {
            value += lambda[k] * c[k] + 0.5 * rho * c[k] * c[k];
            coef[k] = lambda[k] + rho * c[k];
        }
        let (w, z, t) = (&x[..n], &x[n..2 * n], &x[2 * n..]);
        for i in 0..n {
            let (wi, zi, ti) = (w[i], z[i], t[i]);
            grad[i] += 2.0 * wi * (coef[0] + coef[1] * ti + coef[2] * ti * ti);
            grad[n + i] += 2.0 * zi * (coef[3] + coef[4] * ti + coef[5] * ti * ti);
            grad[2 * n + i] +=
                wi * wi * (coef[1] + 2.0 * coef[2] * ti) + zi * zi * (coef[4] + 2.0 * coef[5] * ti);
        }
        value
    }

    /// Least-squares multipliers for the stationarity condition `∇f + Jᵀλ = 0`.
    fn initial_multipliers(&self, x: &[f64]) -> [f64; 6] {
        let mut grad = vec![0.0; 3 * self.n];
        self.objective_grad(x, &mut grad);
        let jac = self.jacobian(x);
        let mut normal = SMatrix::<f64, 6, 6>::zeros();
        let mut rhs = SVector::<f64, 6>::zeros();
        for (row, g) in jac.iter().zip(&grad) {
            for a in 0..6 {
                rhs[a] -= row[a] * g;
                for b in 0..6 {
                    normal[(a, b)] += row[a] * row[b];
                }
            }
        }
        let ridge = 1e-12 * (1.0 + normal.diagonal().amax());
        for a in 0..6 {
            normal[(a, a)] += ridge;
        }
        match normal.cholesky() {
            Some(chol) => {
                let sol = chol.solve(&rhs);
                std::array::from_fn(|k| sol[k])
            }
            None => [0.0; 6],
        }
    }

    /// Projected-gradient stationarity measure `‖P(x − g) − x‖∞`.
    fn projected_gradient_norm(&self, x: &[f64], grad: &[f64]) -> f64 {
        let mut trial: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
        self.project(&mut trial);
        trial
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Box-constrained minimization of the augmented Lagrangian.
    fn inner_solve(&self, x: &mut Vec<f64>, lambda: &[f64; 6], rho: f64, tol: f64) {
        let dim = x.len();
        let mut grad = vec![0.0; dim];
        let mut value = self.lagrangian(x, lambda, rho, &mut grad);
        let mut history = [value; NONMONOTONE_MEMORY];
        let mut step = {
            let pg = self.projected_gradient_norm(x, &grad);
            if pg > 0.0 {
                (1.0 / pg).min(1.0)
            } else {
                1.0
            }
        };
        let mut trial = vec![0.0; dim];
        let mut trial_grad = vec![0.0; dim];

        for iter in 0..MAX_INNER {
            if self.projected_gradient_norm(x, &grad) <= tol {
                break;
            }
            // Direction toward the projected step.
            let mut dir: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            self.project(&mut dir);
            dir.iter_mut().zip(x.iter()).for_each(|(d, a)| *d -= a);
            let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
            if slope >= 0.0 {
                break;
            }

            let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut alpha = 1.0;
            let mut accepted = false;
            let mut trial_value = value;
            for _ in 0..60 {
                for k in 0..dim {
                    trial[k] = x[k] + alpha * dir[k];
                }
                trial_value = self.lagrangian(&trial, lambda, rho, &mut trial_grad);
                if trial_value <= reference + ARMIJO * alpha * slope {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }

            // Barzilai-Borwein step for the next iteration.
            let mut ss = 0.0;
            let mut sy = 0.0;
            for k in 0..dim {
                let s = trial[k] - x[k];
                let y = trial_grad[k] - grad[k];
                ss += s * s;
                sy += s * y;
            }
            step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e3 };

            std::mem::swap(x, &mut trial);
            std::mem::swap(&mut grad, &mut trial_grad);
            value = trial_value;
            history[iter % NONMONOTONE_MEMORY] = value;
        }
    }

    /// Augmented Lagrangian outer loop from `start`. A `warm` start is assumed
    /// near-feasible and gets least-squares multipliers; others start from zero.
    fn solve(&self, mut x: Vec<f64>, warm: bool, tol_moments: f64) -> Vec<f64> {
        self.project(&mut x);
        let mut lambda = if warm {
            self.initial_multipliers(&x)
        } else {
            [0.0; 6]
        };
        let mut rho = INITIAL_PENALTY;
        // Aim well below the acceptance tolerance so the bound comparison is not polluted.
        let target = (tol_moments * 1e-3).max(1e-14);
        let mut best: Option<(f64, Vec<f64>)> = None;

        for outer in 0..MAX_OUTER {
            let inner_tol = (1e-3 * 0.1f64.powi(outer as i32)).max(1e-12);
            self.inner_solve(&mut x, &lambda, rho, inner_tol);
            let c = self.constraints(&x);
            let violation = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));

            let mut grad = vec![0.0; x.len()];
            self.lagrangian(&x, &lambda, 0.0, &mut grad);
            let stationarity = self.projected_gradient_norm(&x, &grad);
            if best.as_ref().is_none_or(|(v, _)| violation < *v) {
                best = Some((violation, x.clone()));
            }
            if violation <= target && stationarity <= 1e-9 {
                return x;
            }
            for k in 0..6 {
                lambda[k] += rho * c[k];
            }
            rho = (rho * 2.0).min(MAX_PENALTY);
        }
        // Not fully converged: hand back the iterate with the smallest violation.
        let (_, last_best) = best.expect("at least one outer iteration");
        let c_last = self.constraints(&x);
        let v_last = c_last.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let v_best = self.constraints(&last_best).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if v_last <= v_best {
            x
        } else {
            last_best
        }
    }

    fn pack(&self, pair: &DiscretePair) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; 3 * n];
        for (i, ((u, p), q)) in pair
            .support()
            .iter()
            .zip(pair.probs_p())
            .zip(pair.probs_q())
            .take(n)
            .enumerate()
        {
            x[i] = p.sqrt();
            x[n + i] = q.sqrt();
            x[2 * n + i] = self.to_t(*u);
        }
        x
    }

    /// Fill support slots beyond `used` with zero-mass points spread over the standardized window.
    fn pad(&self, x: &mut [f64], used: usize) {
        let n = self.n;
        let (lo, hi) = (self.t_lo.max(-3.0), self.t_hi.min(3.0));
        let free = n - used;
        for (slot, i) in (used..n).enumerate() {
            x[i] = 0.0;
            x[n + i] = 0.0;
            x[2 * n + i] = lo + (hi - lo) * (slot as f64 + 0.5) / free as f64;
        }
    }

    fn anchor_start(&self, spec: &MomentSpec, config: &VerificationConfig) -> Result<Option<Vec<f64>>> {
        match binary_attainer(spec) {
            Ok(att) => {
                if att.u1.abs() > config.radius || att.u2.abs() > config.radius {
                    return Err(Error::InvalidConfig(format!(
                        "radius {} does not contain the attainer support ({}, {})",
                        config.radius, att.u2, att.u1
                    )));
                }
                let pair = att.pair();
                let mut x = self.pack(&pair);
                self.pad(&mut x, pair.len().min(self.n));
                Ok(Some(x))
            }
            Err(Error::EqualMeans) => Ok(self.sequence_start(spec, config)),
            Err(e) => Err(e),
        }
    }

    /// The vanishing sequence at the largest index whose support fits in the box.
    fn sequence_start(&self, spec: &MomentSpec, config: &VerificationConfig) -> Option<Vec<f64>> {
        if self.n < 4 || spec.sigma_p == 0.0 || spec.sigma_q == 0.0 {
            return None;
        }
        let params = sequence_parameters(spec.sigma_p, spec.sigma_q).ok()?;
        let room = 0.9 * config.radius - spec.mean_p.abs();
        let max_mu = room / params.support_scale;
        if max_mu <= 1.0 {
            return None;
        }
        let j_max = ((max_mu * max_mu - 1.0) / (params.work_var_q - 1.0)).floor();
        let j = j_max.min(1e15) as u64;
        if j < params.min_index() {
            return None;
        }
        let centered = equal_means_sequence(spec.sigma_p, spec.sigma_q, j).ok()?;
        let shifted = DiscretePair::new(
            centered.support().iter().map(|u| u + spec.mean_p).collect(),
            centered.probs_p().to_vec(),
            centered.probs_q().to_vec(),
        )
        .ok()?;
        let mut x = self.pack(&shifted);
        self.pad(&mut x, shifted.len());
        Some(x)
    }

    fn random_start(&self, spec: &MomentSpec, config: &VerificationConfig, stream: u64) -> Vec<f64> {
        if let Ok(pair) = sample_on_stream(spec, config, stream) {
            if pair.len() == self.n {
                return self.pack(&pair);
            }
        }
        let mut rng = config.rng(stream);
        let n = self.n;
        let mut x = vec![0.0; 3 * n];
        let (lo, hi) = (self.t_lo.max(-3.0), self.t_hi.min(3.0));
        for block in 0..2 {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for i in 0..n {
                x[block * n + i] = (raw[i] / total).sqrt();
            }
        }
        for i in 0..n {
            x[2 * n + i] = rng.gen_range(lo..=hi);
        }
        x
    }

    /// Convert a standardized iterate into a normalized pair and score it.
    fn record(
        &self,
        spec: &MomentSpec,
        config: &VerificationConfig,
        x: &[f64],
    ) -> Result<VerificationRecord> {
        let n = self.n;
        let p: Vec<f64> = x[..n].iter().map(|w| w * w).collect();
        let q: Vec<f64> = x[n..2 * n].iter().map(|z| z * z).collect();
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        if !(sp > 0.0 && sq > 0.0) {
            return Err(Error::InvalidPair("optimizer drove all mass to zero".into()));
        }
        let support: Vec<f64> = x[2 * n..]
            .iter()
            .map(|&t| self.to_u(t).clamp(-config.radius, config.radius))
            .collect();
        let pair = DiscretePair::new(
            support,
            p.iter().map(|v| v / sp).collect(),
            q.iter().map(|v| v / sq).collect(),
        )?;
        VerificationRecord::new(RecordKind::Optimized, spec, pair, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::hellinger_lower_bound;
    use crate::types::hellinger_sq;

    fn cfg(n: usize, radius: f64, restarts: usize) -> VerificationConfig {
        VerificationConfig {
            n_points: n,
            radius,
            n_restarts: restarts,
            n_trials: 0,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MomentSpec::new(1.0, 0.7, -0.5, 1.3).unwrap();
        let config = cfg(4, 50.0, 1);
        let problem = Problem::new(&spec, &config);
        let x: Vec<f64> = (0..12).map(|i| 0.2 + 0.05 * i as f64).collect();
        let lambda = [0.3, -0.2, 0.1, 0.5, 0.4, -0.6];
        let rho = 3.0;
        let mut grad = vec![0.0; 12];
        problem.lagrangian(&x, &lambda, rho, &mut grad);
        let mut scratch = vec![0.0; 12];
        for k in 0..12 {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (problem.lagrangian(&xp, &lambda, rho, &mut scratch)
                - problem.lagrangian(&xm, &lambda, rho, &mut scratch))
                / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6 * (1.0 + fd.abs()), "k={k} fd={fd} g={}", grad[k]);
        }
    }

    #[test]
    fn reference_spec_reaches_bound() {
        let spec = MomentSpec::from_variances(10.0, 100.0, 3.0, 9.0).unwrap();
        let rec = minimize_h2(&spec, &cfg(5, 200.0, 20)).unwrap();
        assert!(rec.feasible);
        assert!((rec.achieved_h2 - 0.1195).abs() < 1e-4, "{}", rec.achieved_h2);
        assert!(rec.gap <= 1e-4);
        assert!(rec.off_top2_mass < 1e-6);
    }

    #[test]
    fn two_point_support_recovers_attainer() {
        let spec = MomentSpec::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let rec = minimize_h2(&spec, &cfg(2, 50.0, 5)).unwrap();
        assert!(rec.gap.abs() < 1e-8, "{}", rec.gap);
        let expected = binary_attainer(&spec).unwrap().pair();
        for (a, b) in rec.pair.support().iter().zip(expected.support()) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in rec.pair.probs_p().iter().zip(expected.probs_p()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn random_restarts_never_beat_the_bound() {
        let spec = MomentSpec::new(2.0, 1.0, 0.0, 3.0).unwrap();
        let out = minimize_h2_all(&spec, &cfg(5, 100.0, 12)).unwrap();
        let bound = hellinger_lower_bound(&spec).unwrap();
        for rec in out.restarts.iter().filter(|r| r.feasible) {
            assert!(!rec.is_violation(), "{rec:?}");
            assert!(rec.achieved_h2 >= bound - 1e-8);
            assert!((hellinger_sq(&rec.pair) - rec.achieved_h2).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_means_drive_h2_toward_zero() {
        let spec = MomentSpec::new(0.0, 1.0, 0.0, 2.0).unwrap();
        let rec = minimize_h2(&spec, &cfg(8, 1000.0, 4)).unwrap();
        assert_eq!(rec.bound, 0.0);
        assert!(rec.achieved_h2 < 0.01, "{}", rec.achieved_h2);
    }

    #[test]
    fn radius_must_hold_attainer() {
        let spec = MomentSpec::from_variances(10.0, 100.0, 3.0, 9.0).unwrap();
        assert!(matches!(
            minimize_h2(&spec, &cfg(5, 15.0, 2)),
            Err(Error::InvalidConfig(_))
        ));
    }
}
