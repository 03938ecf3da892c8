#![allow(dead_code)]

use rtlevo::eval::{DesignAnnotation, SyntheticEvaluator, SyntheticEvaluatorConfig};
use rtlevo::llm::{Matcher, ScriptEntry};
use rtlevo::model::{CircuitKind, PpaMetrics, ProblemSpec};
use rtlevo::prompts::render_response;

pub const REF: PpaMetrics = PpaMetrics {
    power: 4.0,
    area: 40.0,
    effective_clock_period: 0.5,
};

pub fn spec() -> ProblemSpec {
    ProblemSpec {
        name: "adder2".into(),
        functional_description: "A 2-bit adder: y = a + b, carry dropped.".into(),
        testbench_source: String::new(),
        reference_ppa: REF,
        circuit_kind: CircuitKind::Combinational,
        target_clock_period: 0.01,
    }
}

pub fn annotated_evaluator() -> SyntheticEvaluator {
    SyntheticEvaluator::new(SyntheticEvaluatorConfig::default())
}

/// A model response carrying a synthetic design annotation.
pub fn design(tag: &str, power: f64, area: f64, passes: bool) -> String {
    let ann = DesignAnnotation {
        ppa: PpaMetrics::new(power, area, 0.5),
        passes,
    };
    render_response(
        &format!("design {tag}"),
        &format!("{}\nmodule adder2_{tag} (input [1:0] a, b, output [1:0] y);\n  assign y = a + b;\nendmodule", ann.render()),
    )
}

pub fn feedback_entry() -> ScriptEntry {
    ScriptEntry::new(Matcher::Feedback, "Looks plausible; check the carry.").sticky()
}
