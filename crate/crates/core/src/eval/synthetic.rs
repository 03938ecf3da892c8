//! Tool-free evaluator driven by pure rules over the code text.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvironmentError, Evaluator};
use crate::model::{EvalOutcome, IndividualId, PpaMetrics, ProblemSpec};

/// Marker that starts a design annotation line.
pub const DESIGN_TAG: &str = "// synthetic-design";

/// PPA and correctness stated inline in a design's code:
/// `// synthetic-design power=P area=A period=T status=pass|fail`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignAnnotation {
    pub ppa: PpaMetrics,
    pub passes: bool,
}

impl DesignAnnotation {
    pub fn render(&self) -> String {
        format!(
            "{DESIGN_TAG} power={} area={} period={} status={}",
            self.ppa.power,
            self.ppa.area,
            self.ppa.effective_clock_period,
            if self.passes { "pass" } else { "fail" }
        )
    }

    fn parse_line(line: &str) -> Option<Self> {
        let rest = &line[line.find(DESIGN_TAG)? + DESIGN_TAG.len()..];
        let (mut power, mut area, mut period, mut passes) = (None, None, None, None);
        for token in rest.split_whitespace() {
            let (key, value) = token.split_once('=')?;
            match key {
                "power" => power = value.parse::<f64>().ok(),
                "area" => area = value.parse::<f64>().ok(),
                "period" => period = value.parse::<f64>().ok(),
                "status" => passes = Some(value == "pass"),
                _ => {}
            }
        }
        Some(Self {
            ppa: PpaMetrics::new(power?, area?, period?),
            passes: passes?,
        })
    }

    /// Every well-formed annotation in `text`, in order of appearance.
    pub fn parse_all(text: &str) -> Vec<Self> {
        text.lines().filter_map(Self::parse_line).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassRule {
    Always,
    Never,
    /// Passes iff the code contains the text.
    Contains(String),
    /// Passes iff the code does not contain the text.
    Absent(String),
    /// Passes iff the first annotation says `status=pass`.
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpaRule {
    /// Reads the first annotation; synthesis fails without one.
    Annotated,
    Fixed(PpaMetrics),
    /// `base` scaled per metric by a factor in `[1 - spread, 1 + spread]`
    /// drawn from a hash of the code and the seed.
    Hashed { base: PpaMetrics, spread: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvaluatorConfig {
    #[serde(default = "annotated_pass")]
    pub pass_rule: PassRule,
    #[serde(default = "annotated_ppa")]
    pub ppa_rule: PpaRule,
    /// Synthesis fails for code containing this text.
    #[serde(default)]
    pub synth_fail_marker: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

fn annotated_pass() -> PassRule {
    PassRule::Annotated
}
fn annotated_ppa() -> PpaRule {
    PpaRule::Annotated
}

impl Default for SyntheticEvaluatorConfig {
    fn default() -> Self {
        Self {
            pass_rule: PassRule::Annotated,
            ppa_rule: PpaRule::Annotated,
            synth_fail_marker: None,
            seed: 0,
        }
    }
}

fn fnv1a(seed: u64, text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    cfg: SyntheticEvaluatorConfig,
}

impl SyntheticEvaluator {
    pub fn new(cfg: SyntheticEvaluatorConfig) -> Self {
        Self { cfg }
    }

    pub fn passes(&self, code: &str) -> bool {
        match &self.cfg.pass_rule {
            PassRule::Always => true,
            PassRule::Never => false,
            PassRule::Contains(s) => code.contains(s.as_str()),
            PassRule::Absent(s) => !code.contains(s.as_str()),
            PassRule::Annotated => DesignAnnotation::parse_all(code)
                .first()
                .is_some_and(|a| a.passes),
        }
    }

    /// The PPA rule applied to `code`; `None` means synthesis fails.
    pub fn ppa(&self, code: &str) -> Option<PpaMetrics> {
        if let Some(marker) = &self.cfg.synth_fail_marker {
            if code.contains(marker.as_str()) {
                return None;
            }
        }
        match &self.cfg.ppa_rule {
            PpaRule::Annotated => DesignAnnotation::parse_all(code).first().map(|a| a.ppa),
            PpaRule::Fixed(p) => Some(*p),
            PpaRule::Hashed { base, spread } => {
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.cfg.seed, code));
                let s = spread.clamp(0.0, 0.99);
                let mut f = |v: f64| if s > 0.0 { v * rng.gen_range(1.0 - s..=1.0 + s) } else { v };
                Some(PpaMetrics::new(
                    f(base.power),
                    f(base.area),
                    f(base.effective_clock_period),
                ))
            }
        }
        .filter(|p| p.power > 0.0 && p.area > 0.0 && p.effective_clock_period > 0.0)
    }
}

impl Evaluator for SyntheticEvaluator {
    fn assess(&self, _subject: IndividualId, code: &str, _spec: &ProblemSpec) -> Result<EvalOutcome, EnvironmentError> {
        if !self.passes(code) {
            return Ok(EvalOutcome::sim_failure(format!(
                "synthetic simulation: FAIL ({:?})",
                self.cfg.pass_rule
            )));
        }
        let ppa = self.ppa(code);
        let synth_log = match &ppa {
            Some(p) => format!(
                "synthetic synthesis: power={} area={} period={}",
                p.power, p.area, p.effective_clock_period
            ),
            None => "synthetic synthesis: FAILED".to_string(),
        };
        Ok(EvalOutcome {
            sim_passed: true,
            synth_succeeded: ppa.is_some(),
            ppa,
            sim_log: "synthetic simulation: all tests passed".to_string(),
            synth_log,
            post_synth_functional: None,
        })
    }

    fn reference_ppa(&self, code: &str, _spec: &ProblemSpec) -> Result<PpaMetrics, crate::Error> {
        self.ppa(code)
            .ok_or_else(|| crate::Error::Ineligible("synthetic synthesis rule rejected the reference".into()))
    }

    fn max_concurrency(&self) -> usize {
        usize::MAX
    }
}
