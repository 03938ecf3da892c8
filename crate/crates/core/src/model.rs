//! Domain vocabulary shared by the rest of the crate.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bandit::BanditState;
use crate::error::{Error, Result};
use crate::prompts::PromptStrategy;

/// Version stamped into every persisted record.
pub const SCHEMA_VERSION: u32 = 1;

/// Run-unique, monotonically increasing individual identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(pub u64);

impl fmt::Display for IndividualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationLabel {
    Fail,
    Success,
}

impl fmt::Display for PopulationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            PopulationLabel::Fail => "fail",
            PopulationLabel::Success => "success",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitKind {
    Combinational,
    Sequential,
}

/// Scalar fitness on the extended real line.
///
/// Functionally incorrect designs carry [`Fitness::NEG_INFINITY`]; every
/// other value is finite. Ordering is total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness(f64);

impl Fitness {
    pub const NEG_INFINITY: Fitness = Fitness(f64::NEG_INFINITY);

    /// Panics on NaN or positive infinity.
    pub fn new(value: f64) -> Self {
        assert!(
            !value.is_nan() && value != f64::INFINITY,
            "fitness must be finite or -inf, got {value}"
        );
        Fitness(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Eq for Fitness {}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{:.6}", self.0)
        } else {
            f.write_str("-inf")
        }
    }
}

// JSON has no infinities, so -inf travels as the string "-inf".
impl Serialize for Fitness {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Fitness {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) if v.is_finite() => Ok(Fitness(v)),
            Repr::Text(s) if s == "-inf" => Ok(Fitness::NEG_INFINITY),
            Repr::Num(v) => Err(serde::de::Error::custom(format!("invalid fitness {v}"))),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("invalid fitness {s:?}"))),
        }
    }
}

/// Post-synthesis quality metrics of one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaMetrics {
    pub power: f64,
    pub area: f64,
    /// Achieved clock period in nanoseconds.
    pub effective_clock_period: f64,
}

impl PpaMetrics {
    pub fn new(power: f64, area: f64, effective_clock_period: f64) -> Self {
        Self {
            power,
            area,
            effective_clock_period,
        }
    }

    pub fn metric(&self, metric: PpaMetric) -> f64 {
        match metric {
            PpaMetric::Power => self.power,
            PpaMetric::Area => self.area,
            PpaMetric::ClockPeriod => self.effective_clock_period,
        }
    }

    /// Checks that every field is finite and strictly positive.
    pub fn validate_positive(&self, what: &str) -> Result<()> {
        for m in PpaMetric::ALL {
            let v = self.metric(m);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "{what}.{} must be > 0, got {v}",
                    m.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PpaMetric {
    Power,
    Area,
    ClockPeriod,
}

impl PpaMetric {
    pub const ALL: [PpaMetric; 3] = [PpaMetric::Power, PpaMetric::Area, PpaMetric::ClockPeriod];

    pub fn name(self) -> &'static str {
        match self {
            PpaMetric::Power => "power",
            PpaMetric::Area => "area",
            PpaMetric::ClockPeriod => "effective_clock_period",
        }
    }
}

/// Verdicts and raw logs of evaluating one piece of code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub sim_passed: bool,
    /// Only meaningful when `sim_passed`; synthesis is skipped otherwise.
    pub synth_succeeded: bool,
    pub ppa: Option<PpaMetrics>,
    pub sim_log: String,
    pub synth_log: String,
    /// Gate-level re-simulation verdict, when that stage ran.
    pub post_synth_functional: Option<bool>,
}

impl EvalOutcome {
    pub fn sim_failure(sim_log: impl Into<String>) -> Self {
        Self {
            sim_passed: false,
            synth_succeeded: false,
            ppa: None,
            sim_log: sim_log.into(),
            synth_log: String::new(),
            post_synth_functional: None,
        }
    }

    pub fn label(&self) -> PopulationLabel {
        if self.sim_passed {
            PopulationLabel::Success
        } else {
            PopulationLabel::Fail
        }
    }
}

/// One optimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub functional_description: String,
    pub testbench_source: String,
    pub reference_ppa: PpaMetrics,
    pub circuit_kind: CircuitKind,
    /// Synthesis clock period in nanoseconds.
    pub target_clock_period: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.functional_description.trim().is_empty() {
            return Err(Error::config("problem.functional_description must be non-empty"));
        }
        if !(self.target_clock_period.is_finite() && self.target_clock_period > 0.0) {
            return Err(Error::config(format!(
                "problem.target_clock_period must be > 0, got {}",
                self.target_clock_period
            )));
        }
        self.reference_ppa.validate_positive("problem.reference_ppa")
    }
}

/// How an individual was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parents: Vec<IndividualId>,
    pub strategy: PromptStrategy,
}

/// A design candidate: a (Thought, Code, Feedback) tuple plus its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: IndividualId,
    pub thought: String,
    pub code: String,
    pub feedback: Option<String>,
    outcome: Option<EvalOutcome>,
    fitness: Option<Fitness>,
    /// `None` for Initial Prompt individuals.
    pub lineage: Option<Lineage>,
    pub generation_born: u32,
}

impl Individual {
    pub fn new(
        id: IndividualId,
        thought: impl Into<String>,
        code: impl Into<String>,
        lineage: Option<Lineage>,
        generation_born: u32,
    ) -> Self {
        Self {
            id,
            thought: thought.into(),
            code: code.into(),
            feedback: None,
            outcome: None,
            fitness: None,
            lineage,
            generation_born,
        }
    }

    /// Attaches an evaluation. Outcome and fitness are set together so that
    /// one is present iff the other is.
    pub fn set_evaluation(&mut self, outcome: EvalOutcome, fitness: Fitness) {
        debug_assert_eq!(outcome.sim_passed, fitness.is_finite());
        self.outcome = Some(outcome);
        self.fitness = Some(fitness);
    }

    pub fn outcome(&self) -> Option<&EvalOutcome> {
        self.outcome.as_ref()
    }

    pub fn fitness(&self) -> Option<Fitness> {
        self.fitness
    }

    /// Fitness of an evaluated individual; unevaluated ones rank lowest.
    pub fn fitness_or_min(&self) -> Fitness {
        self.fitness.unwrap_or(Fitness::NEG_INFINITY)
    }

    pub fn ppa(&self) -> Option<&PpaMetrics> {
        self.outcome.as_ref().and_then(|o| o.ppa.as_ref())
    }

    pub fn strategy(&self) -> Option<PromptStrategy> {
        self.lineage.as_ref().map(|l| l.strategy)
    }

    pub fn is_evaluated(&self) -> bool {
        self.outcome.is_some()
    }
}

/// Population label of an evaluated individual.
pub fn classify(ind: &Individual) -> Result<PopulationLabel> {
    ind.outcome()
        .map(EvalOutcome::label)
        .ok_or_else(|| Error::usage(format!("individual {} has not been evaluated", ind.id)))
}

/// One bandit decision and the reward it earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEvent {
    pub offspring: IndividualId,
    pub population: PopulationLabel,
    pub strategy: PromptStrategy,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSnapshot {
    pub fail: BanditState,
    pub success: BanditState,
}

/// Immutable snapshot of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub schema_version: u32,
    pub generation_index: u32,
    pub population: Vec<Individual>,
    pub offspring: Vec<Individual>,
    pub strategy_events: Vec<StrategyEvent>,
    pub best_so_far: IndividualId,
    pub best_fitness: Fitness,
    pub fail_count: usize,
    pub success_count: usize,
    pub bandits: BanditSnapshot,
}

impl GenerationRecord {
    pub fn pass_rate(&self) -> f64 {
        let n = self.fail_count + self.success_count;
        if n == 0 {
            0.0
        } else {
            self.success_count as f64 / n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn evaluated(sim_passed: bool, synth_succeeded: bool) -> Individual {
        let mut ind = Individual::new(IndividualId(1), "t", "module m; endmodule", None, 0);
        let outcome = EvalOutcome {
            sim_passed,
            synth_succeeded,
            ppa: None,
            sim_log: "log".into(),
            synth_log: String::new(),
            post_synth_functional: None,
        };
        let fitness = if sim_passed {
            Fitness::new(0.0)
        } else {
            Fitness::NEG_INFINITY
        };
        ind.set_evaluation(outcome, fitness);
        ind
    }

    #[test]
    fn classify_by_simulation_verdict() {
        assert_eq!(classify(&evaluated(true, true)).unwrap(), PopulationLabel::Success);
        assert_eq!(classify(&evaluated(false, false)).unwrap(), PopulationLabel::Fail);
        // synthesis does not influence the label
        assert_eq!(classify(&evaluated(true, false)).unwrap(), PopulationLabel::Success);
    }

    #[test]
    fn classify_unevaluated_is_usage_error() {
        let ind = Individual::new(IndividualId(7), "t", "c", None, 0);
        assert!(matches!(classify(&ind), Err(Error::Usage(_))));
    }

    #[test]
    fn fitness_orders_neg_inf_lowest() {
        let mut v = vec![Fitness::new(0.3), Fitness::NEG_INFINITY, Fitness::new(-1e9)];
        v.sort();
        assert_eq!(v, vec![Fitness::NEG_INFINITY, Fitness::new(-1e9), Fitness::new(0.3)]);
    }

    #[test]
    fn fitness_json_round_trip() {
        let v = vec![Fitness::new(0.125), Fitness::NEG_INFINITY];
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(text, r#"[0.125,"-inf"]"#);
        let back: Vec<Fitness> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn problem_spec_validation() {
        let mut spec = ProblemSpec {
            name: "p".into(),
            functional_description: "adds".into(),
            testbench_source: String::new(),
            reference_ppa: PpaMetrics::new(1.0, 2.0, 0.5),
            circuit_kind: CircuitKind::Combinational,
            target_clock_period: 0.01,
        };
        spec.validate().unwrap();
        spec.reference_ppa.area = 0.0;
        assert!(spec.validate().is_err());
        spec.reference_ppa.area = 2.0;
        spec.target_clock_period = 0.0;
        assert!(spec.validate().is_err());
        spec.target_clock_period = 0.01;
        spec.functional_description = "  ".into();
        assert!(spec.validate().is_err());
    }
}
