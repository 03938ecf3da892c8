//! Evaluation of candidate code: simulation, synthesis, PPA extraction,
//! fitness and LLM feedback.

mod process;
mod report;
mod synthetic;
mod toolchain;

use std::path::PathBuf;

use thiserror::Error;

use crate::fitness::{fitness_of, FitnessWeights};
use crate::llm::CompletionProvider;
use crate::model::{EvalOutcome, Individual, IndividualId, PpaMetrics, ProblemSpec};
use crate::prompts::{render_template, PromptBundle, PromptKind, PromptTemplates};

pub use process::{find_executable, run_command, ProcessOutput};
pub use report::{parse_ppa_report, ReportPatterns};
pub use synthetic::{DesignAnnotation, PassRule, PpaRule, SyntheticEvaluator, SyntheticEvaluatorConfig, DESIGN_TAG};
pub use toolchain::{StageCommand, ToolchainConfig, ToolchainEvaluator};

/// Default number of trailing log characters included in feedback prompts.
pub const DEFAULT_LOG_TAIL: usize = 4000;

/// Problems with the host environment. These abort a run rather than
/// failing one individual.
#[derive(Debug, Error)]
pub enum EnvironmentError {
    #[error("required executable `{0}` was not found on PATH")]
    MissingExecutable(String),
    #[error("liberty file {} is not readable: {reason}", path.display())]
    Liberty { path: PathBuf, reason: String },
    #[error("cannot use work directory {}: {reason}", path.display())]
    Workdir { path: PathBuf, reason: String },
    #[error("failed to run `{program}`: {reason}")]
    Spawn { program: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("synthesis report has no {0} figure")]
    Missing(&'static str),
    #[error("synthesis report {field} is negative: {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("synthesis report {field} value {text:?} is not a number")]
    Unparsable { field: &'static str, text: String },
    #[error("invalid report pattern for {field}: {message}")]
    Pattern { field: &'static str, message: String },
}

/// Something that can judge a piece of RTL.
pub trait Evaluator: Send + Sync {
    /// Simulates `code` and, when it passes, synthesizes it. Per-design tool
    /// failures are reported inside the outcome.
    fn assess(&self, subject: IndividualId, code: &str, spec: &ProblemSpec) -> Result<EvalOutcome, EnvironmentError>;

    /// PPA of a reference implementation.
    fn reference_ppa(&self, code: &str, spec: &ProblemSpec) -> Result<PpaMetrics, crate::Error>;

    /// Verifies tools and files before any individual is evaluated.
    fn check_environment(&self) -> Result<(), EnvironmentError> {
        Ok(())
    }

    fn max_concurrency(&self) -> usize {
        1
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn assess(&self, subject: IndividualId, code: &str, spec: &ProblemSpec) -> Result<EvalOutcome, EnvironmentError> {
        (**self).assess(subject, code, spec)
    }
    fn reference_ppa(&self, code: &str, spec: &ProblemSpec) -> Result<PpaMetrics, crate::Error> {
        (**self).reference_ppa(code, spec)
    }
    fn check_environment(&self) -> Result<(), EnvironmentError> {
        (**self).check_environment()
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

/// Everything `evaluate` needs besides the individual itself.
pub struct EvalContext<'a> {
    pub spec: &'a ProblemSpec,
    pub evaluator: &'a dyn Evaluator,
    pub provider: &'a dyn CompletionProvider,
    pub templates: &'a PromptTemplates,
    pub weights: FitnessWeights,
    pub log_tail: usize,
}

fn tail(text: &str, max_chars: usize) -> &str {
    let count = text.chars().count();
    if count <= max_chars {
        return text;
    }
    let skip = count - max_chars;
    let idx = text.char_indices().nth(skip).map(|(i, _)| i).unwrap_or(0);
    &text[idx..]
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "n/a".into())
}

/// Builds the feedback prompt for an evaluated individual.
pub fn feedback_prompt(
    ind: &Individual,
    spec: &ProblemSpec,
    templates: &PromptTemplates,
    log_tail: usize,
) -> crate::Result<PromptBundle> {
    let outcome = ind
        .outcome()
        .ok_or_else(|| crate::Error::Usage(format!("individual {} has not been evaluated", ind.id)))?;
    let reference = spec.reference_ppa;
    let ppa = outcome.ppa;
    let (template, strings) = if outcome.sim_passed {
        (
            &templates.feedback_success,
            vec![
                ("synth_log", tail(&outcome.synth_log, log_tail).to_string()),
                ("gen_power", fmt_metric(ppa.map(|p| p.power))),
                ("gen_area", fmt_metric(ppa.map(|p| p.area))),
                ("gen_period", fmt_metric(ppa.map(|p| p.effective_clock_period))),
                ("ref_power", format!("{}", reference.power)),
                ("ref_area", format!("{}", reference.area)),
                ("ref_period", format!("{}", reference.effective_clock_period)),
            ],
        )
    } else {
        (
            &templates.feedback_fail,
            vec![("sim_log", tail(&outcome.sim_log, log_tail).to_string())],
        )
    };
    let mut vars: Vec<(String, &str)> = vec![
        ("functional_description".into(), spec.functional_description.trim()),
        ("code".into(), ind.code.trim_end()),
    ];
    vars.extend(strings.iter().map(|(k, v)| (k.to_string(), v.as_str())));
    Ok(PromptBundle {
        system_text: templates.system.trim_end().to_string(),
        user_text: render_template(template, &vars),
        kind: PromptKind::Feedback,
        parent_ids: Vec::new(),
    })
}

/// Verdict summary used when the provider cannot produce feedback.
pub fn fallback_feedback(ind: &Individual, spec: &ProblemSpec, reason: &str) -> String {
    match ind.outcome() {
        Some(o) if o.sim_passed => match o.ppa {
            Some(p) => format!(
                "Automatic review unavailable ({reason}). The design passed simulation. \
                 PPA: power {} (reference {}), area {} (reference {}), clock period {} ns (reference {} ns).",
                p.power,
                spec.reference_ppa.power,
                p.area,
                spec.reference_ppa.area,
                p.effective_clock_period,
                spec.reference_ppa.effective_clock_period
            ),
            None => format!(
                "Automatic review unavailable ({reason}). The design passed simulation but did not \
                 synthesize. Synthesis log tail:\n{}",
                tail(&o.synth_log, 500)
            ),
        },
        Some(o) => format!(
            "Automatic review unavailable ({reason}). The design failed simulation. Log tail:\n{}",
            tail(&o.sim_log, 500)
        ),
        None => format!("Automatic review unavailable ({reason}). The design was not evaluated."),
    }
}

/// Asks the provider to critique an evaluated individual. Provider failures
/// fall back to a deterministic verdict summary; the result is never empty.
pub fn generate_feedback(
    ind: &Individual,
    spec: &ProblemSpec,
    provider: &dyn CompletionProvider,
    templates: &PromptTemplates,
    log_tail: usize,
) -> crate::Result<String> {
    let bundle = feedback_prompt(ind, spec, templates, log_tail)?;
    Ok(match provider.complete(&bundle) {
        Ok(r) if !r.text.trim().is_empty() => r.text.trim().to_string(),
        Ok(_) => fallback_feedback(ind, spec, "empty response"),
        Err(e) => {
            log::warn!("feedback for {} fell back: {e}", ind.id);
            fallback_feedback(ind, spec, &e.to_string())
        }
    })
}

/// Full evaluation: assess, score, then attach feedback.
pub fn evaluate(mut ind: Individual, ctx: &EvalContext<'_>) -> crate::Result<Individual> {
    let outcome = ctx.evaluator.assess(ind.id, &ind.code, ctx.spec)?;
    attach_outcome(&mut ind, outcome, ctx)?;
    Ok(ind)
}

/// Scores an outcome and generates feedback for it.
pub fn attach_outcome(ind: &mut Individual, outcome: EvalOutcome, ctx: &EvalContext<'_>) -> crate::Result<()> {
    let fitness = fitness_of(&outcome, &ctx.spec.reference_ppa, &ctx.weights);
    ind.set_evaluation(outcome, fitness);
    ind.feedback = Some(generate_feedback(ind, ctx.spec, ctx.provider, ctx.templates, ctx.log_tail)?);
    Ok(())
}
