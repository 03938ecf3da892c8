//! A seeded stand-in for a code-generating model.
//!
//! Designs are ordinary Verilog text carrying one annotation line that states
//! the design's PPA and whether it is functionally correct; the synthetic
//! evaluator reads the same line back. Each operator transforms its parents'
//! annotations the way the corresponding prompt asks a real model to:
//! Fix repairs with some probability, Improve nudges metrics down, Fusion
//! starts from the best of both parents, Explore samples afresh.

use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionResult, ProviderError};
use crate::eval::DesignAnnotation;
use crate::model::PpaMetrics;
use crate::prompts::{render_response, PromptBundle, PromptKind, PromptStrategy};

pub use crate::eval::DESIGN_TAG;

fn default_initial_fail() -> f64 {
    0.7
}
fn default_fix() -> f64 {
    0.5
}
fn default_other_repair() -> f64 {
    0.1
}
fn default_break() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesignerConfig {
    #[serde(default)]
    pub seed: u64,
    /// Probability that an Initial Prompt design is functionally wrong.
    #[serde(default = "default_initial_fail")]
    pub initial_fail_prob: f64,
    /// Probability that Fix turns a failing parent into a passing design.
    #[serde(default = "default_fix")]
    pub fix_repair_prob: f64,
    /// Same, for the other operators applied to a failing parent.
    #[serde(default = "default_other_repair")]
    pub other_repair_prob: f64,
    /// Probability that an operator breaks a passing parent.
    #[serde(default = "default_break")]
    pub break_prob: f64,
}

impl Default for SyntheticDesignerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            initial_fail_prob: default_initial_fail(),
            fix_repair_prob: default_fix(),
            other_repair_prob: default_other_repair(),
            break_prob: default_break(),
        }
    }
}

impl SyntheticDesignerConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("initial_fail_prob", self.initial_fail_prob),
            ("fix_repair_prob", self.fix_repair_prob),
            ("other_repair_prob", self.other_repair_prob),
            ("break_prob", self.break_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("synthetic.{name} must be in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// Multiplicative range applied to each metric by an operator.
fn scale_range(kind: PromptKind) -> (f64, f64) {
    match kind {
        PromptKind::Initial | PromptKind::Evolve(PromptStrategy::Explore) => (0.9, 1.6),
        PromptKind::Evolve(PromptStrategy::Improve) => (0.85, 1.03),
        PromptKind::Evolve(PromptStrategy::Simplify) => (0.88, 1.08),
        PromptKind::Evolve(PromptStrategy::Refactor) => (0.9, 1.1),
        PromptKind::Evolve(PromptStrategy::Fusion) => (0.92, 1.05),
        PromptKind::Evolve(PromptStrategy::Fix) | PromptKind::Feedback => (0.95, 1.1),
    }
}

pub struct SyntheticDesigner {
    cfg: SyntheticDesignerConfig,
    reference: PpaMetrics,
    state: Mutex<(ChaCha8Rng, u64)>,
}

impl SyntheticDesigner {
    pub fn new(cfg: SyntheticDesignerConfig, reference: PpaMetrics) -> Result<Self, ProviderError> {
        cfg.validate().map_err(ProviderError::Config)?;
        Ok(Self {
            state: Mutex::new((ChaCha8Rng::seed_from_u64(cfg.seed), 0)),
            cfg,
            reference,
        })
    }

    fn design(&self, bundle: &PromptBundle, rng: &mut ChaCha8Rng, serial: u64) -> (String, String) {
        let parents = DesignAnnotation::parse_all(&bundle.user_text);
        let (lo, hi) = scale_range(bundle.kind);
        let mut draw = |base: f64| base * rng.gen_range(lo..hi);

        let fresh = matches!(
            bundle.kind,
            PromptKind::Initial | PromptKind::Evolve(PromptStrategy::Explore)
        ) || parents.is_empty();
        let base = if fresh {
            self.reference
        } else {
            let mut b = parents[0].ppa;
            for p in &parents[1..] {
                b.power = b.power.min(p.ppa.power);
                b.area = b.area.min(p.ppa.area);
                b.effective_clock_period = b.effective_clock_period.min(p.ppa.effective_clock_period);
            }
            b
        };
        let ppa = PpaMetrics::new(
            draw(base.power),
            draw(base.area),
            draw(base.effective_clock_period),
        );

        let parent_passes = !parents.is_empty() && parents.iter().all(|p| p.passes);
        let p_pass = match bundle.kind {
            PromptKind::Initial => 1.0 - self.cfg.initial_fail_prob,
            _ if parents.is_empty() => 0.0,
            _ if parent_passes => 1.0 - self.cfg.break_prob,
            PromptKind::Evolve(PromptStrategy::Fix) => self.cfg.fix_repair_prob,
            _ => self.cfg.other_repair_prob,
        };
        let passes = rng.gen_bool(p_pass.clamp(0.0, 1.0));

        let label = match bundle.kind {
            PromptKind::Evolve(s) => s.name(),
            _ => "initial",
        };
        let annotation = DesignAnnotation { ppa, passes }.render();
        let body = if passes {
            "  assign y = a ^ b;"
        } else {
            "  assign y = a & b; // BUG: wrong operator"
        };
        let code = format!(
            "{annotation}\nmodule design_{serial} (input [1:0] a, input [1:0] b, output [1:0] y);\n{body}\nendmodule"
        );
        let thought = format!("{label} variant {serial}: derived from {} parent(s)", parents.len());
        (thought, code)
    }
}

impl CompletionProvider for SyntheticDesigner {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        let text = if bundle.kind == PromptKind::Feedback {
            let verdict = if bundle.user_text.contains("failed functional verification") {
                "The design is functionally wrong; re-check the operator driving y."
            } else {
                "The design is correct; share logic to reduce area and power."
            };
            format!("Synthetic review: {verdict}")
        } else {
            let mut guard = self.state.lock().unwrap_or_else(|e| e.into_inner());
            let (rng, serial) = &mut *guard;
            *serial += 1;
            let n = *serial;
            let (thought, code) = self.design(bundle, rng, n);
            render_response(&thought, &code)
        };
        Ok(CompletionResult {
            text,
            usage: None,
            latency: 0.0,
            attempt_count: 1,
        })
    }
}
