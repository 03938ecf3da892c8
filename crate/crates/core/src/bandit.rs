//! Adaptive prompt-strategy selection.
//!
//! Each population keeps its own multi-armed bandit over its strategy set.
//! Arms are scored with UCB, `Q(i) + c * sqrt(ln T / k_i)`, and the scores are
//! turned into a sampling distribution with a temperature softmax. Arms that
//! were never pulled are tried first, uniformly at random.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::PromptStrategy;

/// Score reported for arms with no pulls. Ranks above every finite score.
pub const UNTRIED_SCORE: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyStats {
    /// Average reward.
    pub q_value: f64,
    pub pull_count: u64,
}

impl StrategyStats {
    fn update(&mut self, reward: f64) {
        self.pull_count += 1;
        self.q_value += (reward - self.q_value) / self.pull_count as f64;
    }
}

/// UCB score of one arm; [`UNTRIED_SCORE`] when `k = 0` or `T = 0`.
pub fn ucb_score(stats: &StrategyStats, total_pulls: u64, c: f64) -> f64 {
    if stats.pull_count == 0 || total_pulls == 0 {
        return UNTRIED_SCORE;
    }
    let bonus = ((total_pulls as f64).ln() / stats.pull_count as f64).sqrt();
    stats.q_value + c * bonus
}

/// Temperature softmax, stabilized by subtracting the maximum score.
pub fn softmax(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::usage("softmax of an empty score list"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::usage(format!("softmax temperature must be > 0, got {temperature}")));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::usage(format!("softmax score must be finite, got {bad}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub stats: BTreeMap<PromptStrategy, StrategyStats>,
    pub total_pulls: u64,
    pub exploration_c: f64,
    pub temperature: f64,
}

impl BanditState {
    pub fn new(
        strategies: impl IntoIterator<Item = PromptStrategy>,
        exploration_c: f64,
        temperature: f64,
    ) -> Result<Self> {
        if !(exploration_c >= 0.0 && exploration_c.is_finite()) {
            return Err(Error::config(format!("bandit c must be >= 0, got {exploration_c}")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::config(format!("bandit temperature must be > 0, got {temperature}")));
        }
        let stats: BTreeMap<_, _> = strategies
            .into_iter()
            .map(|s| (s, StrategyStats::default()))
            .collect();
        if stats.is_empty() {
            return Err(Error::config("bandit needs at least one strategy"));
        }
        Ok(Self {
            stats,
            total_pulls: 0,
            exploration_c,
            temperature,
        })
    }

    pub fn strategies(&self) -> impl Iterator<Item = PromptStrategy> + '_ {
        self.stats.keys().copied()
    }

    pub fn stats(&self, strategy: PromptStrategy) -> Option<&StrategyStats> {
        self.stats.get(&strategy)
    }

    pub fn record_reward(&mut self, strategy: PromptStrategy, reward: f64) -> Result<()> {
        let stats = self
            .stats
            .get_mut(&strategy)
            .ok_or_else(|| Error::usage(format!("strategy {strategy} is not in this bandit's set")))?;
        stats.update(reward);
        self.total_pulls += 1;
        Ok(())
    }

    pub fn score(&self, strategy: PromptStrategy) -> Option<f64> {
        self.stats
            .get(&strategy)
            .map(|s| ucb_score(s, self.total_pulls, self.exploration_c))
    }

    /// Selection distribution over all arms.
    pub fn probabilities(&self) -> Vec<(PromptStrategy, f64)> {
        self.probabilities_excluding(&[])
    }

    /// Selection distribution over the arms not in `excluded`. Empty when
    /// every arm is excluded.
    pub fn probabilities_excluding(&self, excluded: &[PromptStrategy]) -> Vec<(PromptStrategy, f64)> {
        let arms: Vec<(PromptStrategy, &StrategyStats)> = self
            .stats
            .iter()
            .filter(|(s, _)| !excluded.contains(s))
            .map(|(s, st)| (*s, st))
            .collect();
        if arms.is_empty() {
            return Vec::new();
        }
        let untried = arms.iter().filter(|(_, st)| st.pull_count == 0).count();
        if untried > 0 || self.total_pulls == 0 {
            let n = if untried > 0 { untried } else { arms.len() };
            return arms
                .iter()
                .map(|(s, st)| {
                    let p = if untried == 0 || st.pull_count == 0 {
                        1.0 / n as f64
                    } else {
                        0.0
                    };
                    (*s, p)
                })
                .collect();
        }
        let scores: Vec<f64> = arms
            .iter()
            .map(|(_, st)| ucb_score(st, self.total_pulls, self.exploration_c))
            .collect();
        let probs = softmax(&scores, self.temperature).expect("scores of tried arms are finite");
        arms.iter().map(|(s, _)| *s).zip(probs).collect()
    }

    pub fn select_strategy<R: Rng + ?Sized>(&self, rng: &mut R) -> PromptStrategy {
        self.select_strategy_excluding(rng, &[])
            .expect("bandit strategy set is non-empty")
    }

    /// Samples an arm, never returning one in `excluded`.
    pub fn select_strategy_excluding<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        excluded: &[PromptStrategy],
    ) -> Option<PromptStrategy> {
        let untried: Vec<PromptStrategy> = self
            .stats
            .iter()
            .filter(|(s, st)| st.pull_count == 0 && !excluded.contains(s))
            .map(|(s, _)| *s)
            .collect();
        if !untried.is_empty() {
            return untried.choose(rng).copied();
        }
        let probs = self.probabilities_excluding(excluded);
        if probs.is_empty() {
            return None;
        }
        let dist = WeightedIndex::new(probs.iter().map(|(_, p)| *p)).ok()?;
        Some(probs[dist.sample(rng)].0)
    }
}
