//! Numerical evidence for the tight bound: feasible-pair sampling, multi-start
//! constrained minimization of H², and the equal-means vanishing sequence.

mod optimize;
mod sampling;
mod sequence;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::hellinger_lower_bound;
use crate::error::{Error, Result};
use crate::types::{hellinger_sq, moments_of, DiscretePair, MomentSpec};

pub use optimize::{minimize_h2, minimize_h2_all, OptimizationOutcome};
pub use sampling::sample_feasible_pair;
pub use sequence::{equal_means_sequence, sequence_parameters, SequenceParameters};

/// Slack allowed below the bound before a record counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Largest off-top-two mass for a minimizer to count as a two-point pair.
pub const CONCENTRATION_TOL: f64 = 1e-6;

/// Support points closer than this (relative to the spec's scale) are one location
/// when measuring concentration.
pub const MERGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationConfig {
    pub n_points: usize,
    /// Support points are confined to `[-radius, radius]`.
    pub radius: f64,
    pub n_trials: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub tol_moments: f64,
    pub tol_gap: f64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            n_points: 6,
            radius: 100.0,
            n_trials: 1000,
            n_restarts: 20,
            seed: 0,
            tol_moments: 1e-8,
            tol_gap: 1e-4,
        }
    }
}

impl VerificationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_points must be at least 2, got {}",
                self.n_points
            )));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        if self.n_restarts < 1 {
            return Err(Error::InvalidConfig("n_restarts must be at least 1".into()));
        }
        if !(self.tol_moments > 0.0 && self.tol_gap > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Per-task generator: the seed fixes the key and `stream` separates tasks.
    pub(crate) fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Sampled,
    Optimized,
    Sequence,
}

/// One verification trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub kind: RecordKind,
    pub pair: DiscretePair,
    pub achieved_h2: f64,
    /// Tight bound for the target spec.
    pub bound: f64,
    /// `achieved_h2 − bound`.
    pub gap: f64,
    /// Tight bound at the pair's own moments; the inequality holds exactly against this one.
    pub bound_at_moments: f64,
    /// Largest constraint violation: mean errors over the scale, variance errors over its square.
    pub moment_residual: f64,
    pub feasible: bool,
    /// Mass outside the two heaviest support points.
    pub off_top2_mass: f64,
    /// Some support point with mass sits on the box `|u| = radius`.
    pub touches_box: bool,
}

impl VerificationRecord {
    pub(crate) fn new(
        kind: RecordKind,
        spec: &MomentSpec,
        pair: DiscretePair,
        config: &VerificationConfig,
    ) -> Result<Self> {
        let achieved_h2 = hellinger_sq(&pair);
        let bound = hellinger_lower_bound(spec)?;
        let actual = moments_of(&pair)?;
        let moment_residual = moment_residual(spec, &actual);
        let edge = config.radius * (1.0 - 1e-9);
        let touches_box = pair
            .support()
            .iter()
            .zip(pair.probs_p().iter().zip(pair.probs_q()))
            .any(|(u, (p, q))| u.abs() >= edge && p + q > 1e-9);
        Ok(VerificationRecord {
            kind,
            achieved_h2,
            bound,
            gap: achieved_h2 - bound,
            bound_at_moments: hellinger_lower_bound(&actual)?,
            moment_residual,
            feasible: moment_residual <= config.tol_moments,
            off_top2_mass: pair.mass_outside_top_two(MERGE_TOL * scale_or_one(spec)),
            touches_box,
            pair,
        })
    }

    /// True when H² dips below the bound at the pair's own moments by more than [`VIOLATION_TOL`].
    pub fn is_violation(&self) -> bool {
        self.achieved_h2 < self.bound_at_moments - VIOLATION_TOL
    }
}

fn scale_or_one(spec: &MomentSpec) -> f64 {
    match spec.scale() {
        s if s > 0.0 => s,
        _ => 1.0,
    }
}

/// Relative constraint violation between a target spec and achieved moments.
pub fn moment_residual(target: &MomentSpec, actual: &MomentSpec) -> f64 {
    let scale = scale_or_one(target);
    let var = |sd: f64| sd * sd;
    let mean_err = (actual.mean_p - target.mean_p)
        .abs()
        .max((actual.mean_q - target.mean_q).abs());
    let var_err = (var(actual.sigma_p) - var(target.sigma_p))
        .abs()
        .max((var(actual.sigma_q) - var(target.sigma_q)).abs());
    (mean_err / scale).max(var_err / (scale * scale))
}

/// A trial that either produced a record or failed with an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: usize,
    pub kind: RecordKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<VerificationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub n_records: usize,
    pub n_feasible: usize,
    pub n_errors: usize,
    pub min_gap: Option<f64>,
    pub violations: usize,
    pub max_moment_residual: Option<f64>,
    /// Whether the optimizer's best pair is concentrated on two points.
    pub two_point_concentrated: Option<bool>,
    /// Whether some restart met the moment tolerance.
    pub optimizer_converged: bool,
    pub optimizer_gap: Option<f64>,
    pub touched_box: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub spec: MomentSpec,
    pub config: VerificationConfig,
    pub outcomes: Vec<TrialOutcome>,
    pub summary: VerificationSummary,
}

impl VerificationReport {
    pub fn records(&self) -> impl Iterator<Item = &VerificationRecord> {
        self.outcomes.iter().filter_map(|o| o.record.as_ref())
    }
}

/// Sample `n_trials` feasible pairs and run one multi-start minimization.
/// Errors in individual trials are recorded, not propagated.
pub fn run_verification(spec: &MomentSpec, config: &VerificationConfig) -> Result<VerificationReport> {
    spec.validate()?;
    config.validate()?;

    let mut outcomes: Vec<TrialOutcome> = (0..config.n_trials)
        .into_par_iter()
        .map(|index| {
            let result = sample_feasible_pair(spec, config, index)
                .and_then(|pair| VerificationRecord::new(RecordKind::Sampled, spec, pair, config));
            match result {
                Ok(record) => TrialOutcome {
                    index,
                    kind: RecordKind::Sampled,
                    record: Some(record),
                    error: None,
                },
                Err(e) => TrialOutcome {
                    index,
                    kind: RecordKind::Sampled,
                    record: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut optimizer_converged = false;
    let optimized = match minimize_h2(spec, config) {
        Ok(record) => {
            optimizer_converged = true;
            TrialOutcome {
                index: config.n_trials,
                kind: RecordKind::Optimized,
                record: Some(record),
                error: None,
            }
        }
        Err(Error::ConvergenceFailure { best }) => TrialOutcome {
            index: config.n_trials,
            kind: RecordKind::Optimized,
            error: Some(format!(
                "no restart reached the moment tolerance (best residual {:e})",
                best.moment_residual
            )),
            record: Some(*best),
        },
        Err(e) => TrialOutcome {
            index: config.n_trials,
            kind: RecordKind::Optimized,
            record: None,
            error: Some(e.to_string()),
        },
    };
    outcomes.push(optimized);

    let summary = summarize(&outcomes, optimizer_converged);
    Ok(VerificationReport {
        spec: *spec,
        config: config.clone(),
        outcomes,
        summary,
    })
}

fn summarize(outcomes: &[TrialOutcome], optimizer_converged: bool) -> VerificationSummary {
    let records: Vec<&VerificationRecord> = outcomes.iter().filter_map(|o| o.record.as_ref()).collect();
    let feasible: Vec<&&VerificationRecord> = records.iter().filter(|r| r.feasible).collect();
    let optimized = outcomes
        .iter()
        .filter(|o| o.kind == RecordKind::Optimized)
        .find_map(|o| o.record.as_ref());
    VerificationSummary {
        n_records: records.len(),
        n_feasible: feasible.len(),
        n_errors: outcomes.iter().filter(|o| o.error.is_some()).count(),
        min_gap: feasible.iter().map(|r| r.gap).reduce(f64::min),
        violations: feasible.iter().filter(|r| r.is_violation()).count(),
        max_moment_residual: records.iter().map(|r| r.moment_residual).reduce(f64::max),
        two_point_concentrated: optimized
            .filter(|r| r.feasible)
            .map(|r| r.off_top2_mass < CONCENTRATION_TOL),
        optimizer_converged,
        optimizer_gap: optimized.filter(|r| r.feasible).map(|r| r.gap),
        touched_box: records.iter().any(|r| r.touches_box),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_one() -> MomentSpec {
        MomentSpec::from_variances(10.0, 100.0, 3.0, 9.0).unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = VerificationConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            VerificationConfig { n_points: 1, ..ok.clone() },
            VerificationConfig { radius: 0.0, ..ok.clone() },
            VerificationConfig { n_restarts: 0, ..ok.clone() },
            VerificationConfig { tol_moments: 0.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn residual_is_shift_invariant() {
        let a = MomentSpec::new(0.0, 1.0, 1.0, 2.0).unwrap();
        let b = MomentSpec::new(1e-3, 1.0, 1.0, 2.0).unwrap();
        let shift = |s: MomentSpec| MomentSpec::new(s.mean_p + 50.0, s.sigma_p, s.mean_q + 50.0, s.sigma_q).unwrap();
        let r1 = moment_residual(&a, &b);
        let r2 = moment_residual(&shift(a), &shift(b));
        assert!((r1 - 5e-4).abs() < 1e-12);
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn small_batch() {
        let config = VerificationConfig {
            n_points: 6,
            radius: 200.0,
            n_trials: 50,
            n_restarts: 4,
            seed: 7,
            ..Default::default()
        };
        let report = run_verification(&spec_one(), &config).unwrap();
        assert_eq!(report.outcomes.len(), 51);
        assert_eq!(report.summary.violations, 0);
        assert!(report.summary.optimizer_converged);
        assert!(report.summary.min_gap.unwrap() >= -VIOLATION_TOL);
        assert_eq!(report.outcomes.last().unwrap().kind, RecordKind::Optimized);
    }

    #[test]
    fn optimization_only_batch() {
        let config = VerificationConfig {
            n_points: 5,
            radius: 200.0,
            n_trials: 0,
            n_restarts: 3,
            ..Default::default()
        };
        let report = run_verification(&spec_one(), &config).unwrap();
        assert_eq!(report.outcomes.len(), 1);
        assert!(report.summary.optimizer_gap.unwrap() <= config.tol_gap);
    }

    #[test]
    fn equal_means_batch_has_zero_bound() {
        let spec = MomentSpec::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let config = VerificationConfig {
            n_points: 6,
            radius: 100.0,
            n_trials: 30,
            n_restarts: 2,
            ..Default::default()
        };
        let report = run_verification(&spec, &config).unwrap();
        for rec in report.records() {
            assert_eq!(rec.bound, 0.0);
            assert_eq!(rec.gap, rec.achieved_h2);
            assert!(rec.achieved_h2 >= 0.0);
        }
    }

    #[test]
    fn batches_are_deterministic() {
        let config = VerificationConfig {
            n_points: 6,
            radius: 200.0,
            n_trials: 40,
            n_restarts: 3,
            seed: 99,
            ..Default::default()
        };
        let a = run_verification(&spec_one(), &config).unwrap();
        let b = run_verification(&spec_one(), &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_errors_do_not_abort() {
        // Point masses leave nothing to sample; the optimizer still runs.
        let spec = MomentSpec::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let config = VerificationConfig {
            n_points: 4,
            radius: 10.0,
            n_trials: 3,
            n_restarts: 2,
            ..Default::default()
        };
        let report = run_verification(&spec, &config).unwrap();
        assert_eq!(report.outcomes.len(), 4);
        assert!(report.outcomes[..3].iter().all(|o| o.error.is_some() && o.record.is_none()));
    }
}
