//! Scalar fitness from PPA metrics relative to a reference design.
//!
//! The score is the weighted sum of relative improvements
//! `w_p (P_ref - P)/P_ref + w_a (A_ref - A)/A_ref + w_t (T_ref - T)/T_ref`,
//! so zero means "as good as the reference" and higher is better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CircuitKind, EvalOutcome, Fitness, PpaMetric, PpaMetrics};

/// Fitness of designs that simulate correctly but fail synthesis. Finite, so
/// they stay in the Success population, and below any realistic PPA score.
pub const SYNTH_FAIL_FITNESS: f64 = -1.0e9;

/// Lower bound for an effective clock period, in nanoseconds.
pub const DEFAULT_MIN_PERIOD_NS: f64 = 1.0e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    /// Power weight.
    pub alpha: f64,
    /// Area weight.
    pub beta: f64,
    /// Timing weight.
    pub gamma: f64,
}

impl FitnessWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    /// Default weighting: power and area only for combinational logic, all
    /// three metrics equally for sequential logic.
    pub fn for_circuit(kind: CircuitKind) -> Self {
        match kind {
            CircuitKind::Combinational => Self::new(0.5, 0.5, 0.0),
            CircuitKind::Sequential => Self::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(format!("weights.{name} must be >= 0, got {w}")));
            }
        }
        if self.alpha + self.beta + self.gamma <= 0.0 {
            return Err(Error::config("weights must not all be zero"));
        }
        Ok(())
    }

    fn weight(&self, metric: PpaMetric) -> f64 {
        match metric {
            PpaMetric::Power => self.alpha,
            PpaMetric::Area => self.beta,
            PpaMetric::ClockPeriod => self.gamma,
        }
    }
}

/// Achieved clock period at a fixed synthesis target: `target - slack`,
/// floored at [`DEFAULT_MIN_PERIOD_NS`].
pub fn effective_period(target_period: f64, worst_slack: f64) -> f64 {
    effective_period_with_floor(target_period, worst_slack, DEFAULT_MIN_PERIOD_NS)
}

pub fn effective_period_with_floor(target_period: f64, worst_slack: f64, floor: f64) -> f64 {
    (target_period - worst_slack).max(floor)
}

/// Weighted relative PPA improvement of `gen` over `reference`.
pub fn compute_fitness(
    gen: &PpaMetrics,
    reference: &PpaMetrics,
    weights: &FitnessWeights,
) -> Result<f64> {
    reference.validate_positive("reference_ppa")?;
    Ok(PpaMetric::ALL
        .iter()
        .map(|&m| {
            let r = reference.metric(m);
            weights.weight(m) * ((r - gen.metric(m)) / r)
        })
        .sum())
}

/// Fitness of an evaluation outcome.
///
/// Simulation failures get negative infinity. Designs that simulate but have
/// no PPA (synthesis failed or was gated) get [`SYNTH_FAIL_FITNESS`].
pub fn fitness_of(outcome: &EvalOutcome, reference: &PpaMetrics, weights: &FitnessWeights) -> Fitness {
    if !outcome.sim_passed {
        return Fitness::NEG_INFINITY;
    }
    match (&outcome.ppa, outcome.synth_succeeded) {
        (Some(ppa), true) => match compute_fitness(ppa, reference, weights) {
            Ok(f) if f.is_finite() => Fitness::new(f),
            _ => Fitness::new(SYNTH_FAIL_FITNESS),
        },
        _ => Fitness::new(SYNTH_FAIL_FITNESS),
    }
}
