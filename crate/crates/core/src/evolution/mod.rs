//! The dual-population evolutionary engine.
//!
//! Quotas, parent selection and survivor selection are plain functions so
//! they can be tested in isolation; [`Engine`] strings them together with the
//! provider, the evaluator and the two bandits.

mod engine;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::FitnessWeights;
use crate::model::{CircuitKind, Individual, IndividualId, PopulationLabel, PpaMetric};
use crate::prompts::PromptStrategy;

pub use engine::{run_evolution, Engine, EvolutionReport, NoopObserver, Observer, NO_CORRECT_DESIGN, PLACEHOLDER_CODE};

/// Offset added to shifted fitness so that the worst Success member keeps a
/// nonzero chance in roulette selection.
pub const ROULETTE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub offspring_count: usize,
    pub max_generations: u32,
    pub elite_per_metric: usize,
    /// Defaults by circuit kind when absent.
    pub weights: Option<FitnessWeights>,
    pub reward: f64,
    pub exploration_c: f64,
    pub temperature: f64,
    pub rng_seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 10,
            offspring_count: 10,
            max_generations: 20,
            elite_per_metric: 1,
            weights: None,
            reward: 1.0,
            exploration_c: 2.0,
            temperature: 1.0,
            rng_seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 1 {
            return Err(Error::config("evolution.population_size must be >= 1, got 0"));
        }
        if self.offspring_count < 1 {
            return Err(Error::config("evolution.offspring_count must be >= 1, got 0"));
        }
        if self.max_generations < 1 {
            return Err(Error::config("evolution.max_generations must be >= 1, got 0"));
        }
        if self.elite_per_metric.saturating_mul(3) > self.population_size {
            return Err(Error::config(format!(
                "evolution.elite_per_metric must satisfy 3 * n <= population_size ({}), got {}",
                self.population_size, self.elite_per_metric
            )));
        }
        if !(self.reward.is_finite() && self.reward > 0.0) {
            return Err(Error::config(format!("evolution.reward must be > 0, got {}", self.reward)));
        }
        if !(self.exploration_c.is_finite() && self.exploration_c >= 0.0) {
            return Err(Error::config(format!(
                "evolution.exploration_c must be >= 0, got {}",
                self.exploration_c
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config(format!(
                "evolution.temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if let Some(w) = &self.weights {
            w.validate().map_err(|e| match e {
                Error::Config(m) => Error::config(format!("evolution.{m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn weights_for(&self, kind: CircuitKind) -> FitnessWeights {
        self.weights.unwrap_or_else(|| FitnessWeights::for_circuit(kind))
    }
}

/// Splits `lambda` offspring between the sub-populations in proportion to
/// their sizes, by largest remainder with ties going to Fail.
pub fn offspring_quota(fail_count: usize, success_count: usize, lambda: usize) -> (usize, usize) {
    if success_count == 0 {
        return (lambda, 0);
    }
    if fail_count == 0 {
        return (0, lambda);
    }
    let n = (fail_count + success_count) as u128;
    let l = lambda as u128;
    let (mut f, rf) = ((l * fail_count as u128 / n) as usize, l * fail_count as u128 % n);
    let (mut s, rs) = ((l * success_count as u128 / n) as usize, l * success_count as u128 % n);
    // remainders sum to a multiple of n below 2n, so at most one seat is left
    if f + s < lambda {
        if rf >= rs {
            f += 1;
        } else {
            s += 1;
        }
    }
    (f, s)
}

/// Ranking used for survivors and the all-time best: higher fitness, then
/// younger (later-born), then lower id.
pub fn rank_cmp(a: &Individual, b: &Individual) -> Ordering {
    b.fitness_or_min()
        .cmp(&a.fitness_or_min())
        .then(b.generation_born.cmp(&a.generation_born))
        .then(a.id.cmp(&b.id))
}

fn roulette_weights(members: &[&Individual]) -> Option<Vec<f64>> {
    let values: Vec<f64> = members.iter().map(|m| m.fitness_or_min().value()).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return None;
    }
    Some(values.iter().map(|v| v - min + ROULETTE_EPSILON).collect())
}

/// Draws `strategy.arity()` distinct parents from one sub-population:
/// uniformly for Fail, by shifted-fitness roulette for Success.
pub fn select_parents<'a, R: Rng + ?Sized>(
    label: PopulationLabel,
    subpop: &[&'a Individual],
    strategy: PromptStrategy,
    rng: &mut R,
) -> Result<Vec<&'a Individual>> {
    let arity = strategy.arity();
    if subpop.len() < arity {
        return Err(Error::usage(format!(
            "{strategy} needs {arity} parent(s) but the {label} population has {}",
            subpop.len()
        )));
    }
    let mut pool: Vec<&'a Individual> = subpop.to_vec();
    let mut chosen = Vec::with_capacity(arity);
    for _ in 0..arity {
        let weights = match label {
            PopulationLabel::Fail => None,
            PopulationLabel::Success => roulette_weights(&pool),
        };
        let idx = match weights {
            Some(w) => WeightedIndex::new(&w)
                .map_err(|e| Error::usage(format!("roulette weights: {e}")))?
                .sample(rng),
            None => rng.gen_range(0..pool.len()),
        };
        chosen.push(pool.remove(idx));
    }
    Ok(chosen)
}

fn synthesized_success(ind: &Individual) -> bool {
    ind.outcome()
        .is_some_and(|o| o.sim_passed && o.synth_succeeded && o.ppa.is_some())
}

/// Ids of the per-metric PPA elites among `parents`, in the order they were
/// preserved (power, area, clock period), without duplicates.
pub fn ppa_elites(parents: &[Individual], per_metric: usize) -> Vec<IndividualId> {
    let candidates: Vec<&Individual> = parents.iter().filter(|p| synthesized_success(p)).collect();
    let mut seen = BTreeSet::new();
    let mut elites = Vec::new();
    for metric in PpaMetric::ALL {
        let mut sorted = candidates.clone();
        sorted.sort_by(|a, b| {
            let (va, vb) = (a.ppa().unwrap().metric(metric), b.ppa().unwrap().metric(metric));
            va.total_cmp(&vb).then_with(|| rank_cmp(a, b))
        });
        for ind in sorted.into_iter().take(per_metric) {
            if seen.insert(ind.id) {
                elites.push(ind.id);
            }
        }
    }
    elites
}

/// Next population: the per-metric PPA elites of the parents, then the
/// fittest of parents and offspring for the remaining slots. The result has
/// `population_size` members, or every candidate when there are fewer.
pub fn survivor_select(
    parents: &[Individual],
    offspring: &[Individual],
    population_size: usize,
    elite_per_metric: usize,
) -> Vec<Individual> {
    let elites = ppa_elites(parents, elite_per_metric);
    let mut next: Vec<Individual> = elites
        .iter()
        .take(population_size)
        .map(|id| parents.iter().find(|p| p.id == *id).expect("elite comes from parents").clone())
        .collect();
    let mut rest: Vec<&Individual> = parents
        .iter()
        .chain(offspring)
        .filter(|i| !elites.contains(&i.id))
        .collect();
    rest.sort_by(|a, b| rank_cmp(a, b));
    let free = population_size.saturating_sub(next.len());
    next.extend(rest.into_iter().take(free).cloned());
    next
}
