//! Prompt construction and response parsing.
//!
//! Prompts are rendered from plain-text templates with `{name}` placeholders.
//! Recognized placeholders:
//!
//! | placeholder | value |
//! |---|---|
//! | `{functional_description}` | the problem's natural-language description |
//! | `{testbench}` | the testbench, when enabled; empty otherwise |
//! | `{output_format}` | the response-format instructions |
//! | `{parent_thought_N}`, `{parent_code_N}`, `{parent_feedback_N}` | parent N (1-based) |
//! | `{code}`, `{sim_log}`, `{synth_log}` | feedback prompts: the evaluated design |
//! | `{gen_power}`, `{gen_area}`, `{gen_period}` | feedback prompts: its PPA |
//! | `{ref_power}`, `{ref_area}`, `{ref_period}` | feedback prompts: reference PPA |
//!
//! Anything else in braces (Verilog concatenations, for instance) is copied
//! through untouched, and substituted values are never re-expanded.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::model::{Individual, IndividualId, PopulationLabel, ProblemSpec};

/// The six evolutionary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStrategy {
    Fix,
    Simplify,
    Explore,
    Refactor,
    Improve,
    Fusion,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 6] = [
        PromptStrategy::Fix,
        PromptStrategy::Simplify,
        PromptStrategy::Explore,
        PromptStrategy::Refactor,
        PromptStrategy::Improve,
        PromptStrategy::Fusion,
    ];

    /// Number of parents the operator consumes.
    pub fn arity(self) -> usize {
        match self {
            PromptStrategy::Fusion => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptStrategy::Fix => "fix",
            PromptStrategy::Simplify => "simplify",
            PromptStrategy::Explore => "explore",
            PromptStrategy::Refactor => "refactor",
            PromptStrategy::Improve => "improve",
            PromptStrategy::Fusion => "fusion",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for PromptStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptStrategy::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::usage(format!("unknown prompt strategy {s:?}")))
    }
}

/// Strategies available to a population.
pub fn allowed_strategies(label: PopulationLabel) -> [PromptStrategy; 5] {
    use PromptStrategy::*;
    match label {
        PopulationLabel::Fail => [Fix, Simplify, Explore, Refactor, Improve],
        PopulationLabel::Success => [Simplify, Explore, Refactor, Improve, Fusion],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "strategy")]
pub enum PromptKind {
    Initial,
    Evolve(PromptStrategy),
    Feedback,
}

/// A fully rendered prompt, ready for a completion backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub kind: PromptKind,
    pub parent_ids: Vec<IndividualId>,
}

impl PromptBundle {
    pub fn strategy(&self) -> Option<PromptStrategy> {
        match self.kind {
            PromptKind::Evolve(s) => Some(s),
            _ => None,
        }
    }
}

const DEFAULT_SYSTEM: &str = include_str!("../templates/system.txt");
const DEFAULT_OUTPUT_FORMAT: &str = include_str!("../templates/output_format.txt");
const DEFAULT_INITIAL: &str = include_str!("../templates/initial.txt");
const DEFAULT_FEEDBACK_FAIL: &str = include_str!("../templates/feedback_fail.txt");
const DEFAULT_FEEDBACK_SUCCESS: &str = include_str!("../templates/feedback_success.txt");

fn default_strategy_template(strategy: PromptStrategy) -> &'static str {
    match strategy {
        PromptStrategy::Fix => include_str!("../templates/fix.txt"),
        PromptStrategy::Simplify => include_str!("../templates/simplify.txt"),
        PromptStrategy::Explore => include_str!("../templates/explore.txt"),
        PromptStrategy::Refactor => include_str!("../templates/refactor.txt"),
        PromptStrategy::Improve => include_str!("../templates/improve.txt"),
        PromptStrategy::Fusion => include_str!("../templates/fusion.txt"),
    }
}

/// The editable prompt wording.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub system: String,
    pub output_format: String,
    pub initial: String,
    pub strategies: BTreeMap<PromptStrategy, String>,
    pub feedback_fail: String,
    pub feedback_success: String,
    /// Whether `{testbench}` expands to the testbench text.
    pub include_testbench: bool,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system: DEFAULT_SYSTEM.to_string(),
            output_format: DEFAULT_OUTPUT_FORMAT.to_string(),
            initial: DEFAULT_INITIAL.to_string(),
            strategies: PromptStrategy::ALL
                .into_iter()
                .map(|s| (s, default_strategy_template(s).to_string()))
                .collect(),
            feedback_fail: DEFAULT_FEEDBACK_FAIL.to_string(),
            feedback_success: DEFAULT_FEEDBACK_SUCCESS.to_string(),
            include_testbench: false,
        }
    }
}

impl PromptTemplates {
    /// Defaults, with every `<name>.txt` found in `dir` replacing the
    /// template of the same name (`system`, `output_format`, `initial`,
    /// `fix` ... `fusion`, `feedback_fail`, `feedback_success`).
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::default();
        let read = |name: &str| -> Result<Option<String>> {
            let path = dir.join(format!("{name}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(Error::io(path, e)),
            }
        };
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        for (name, slot) in [
            ("system", &mut t.system),
            ("output_format", &mut t.output_format),
            ("initial", &mut t.initial),
            ("feedback_fail", &mut t.feedback_fail),
            ("feedback_success", &mut t.feedback_success),
        ] {
            if let Some(s) = read(name)? {
                *slot = s;
            }
        }
        for s in PromptStrategy::ALL {
            if let Some(text) = read(s.name())? {
                t.strategies.insert(s, text);
            }
        }
        Ok(t)
    }

    fn testbench_block(&self, spec: &ProblemSpec) -> String {
        if self.include_testbench && !spec.testbench_source.trim().is_empty() {
            format!("\n### Testbench\n```verilog\n{}\n```\n", spec.testbench_source.trim_end())
        } else {
            String::new()
        }
    }

    fn common_vars<'a>(&'a self, spec: &'a ProblemSpec, testbench: &'a str) -> Vec<(String, &'a str)> {
        vec![
            ("functional_description".into(), spec.functional_description.trim()),
            ("testbench".into(), testbench),
            ("output_format".into(), self.output_format.trim_end()),
        ]
    }
}

/// Single-pass `{name}` substitution. Unknown names are left verbatim.
pub fn render_template(template: &str, vars: &[(String, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let value = if after[name_len..].starts_with('}') && name_len > 0 {
            let name = &after[..name_len];
            vars.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
        } else {
            None
        };
        match value {
            Some(v) => {
                out.push_str(v);
                rest = &after[name_len + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn build_initial_prompt(spec: &ProblemSpec, templates: &PromptTemplates) -> PromptBundle {
    let tb = templates.testbench_block(spec);
    let vars = templates.common_vars(spec, &tb);
    PromptBundle {
        system_text: templates.system.trim_end().to_string(),
        user_text: render_template(&templates.initial, &vars),
        kind: PromptKind::Initial,
        parent_ids: Vec::new(),
    }
}

pub fn build_evolutionary_prompt(
    strategy: PromptStrategy,
    spec: &ProblemSpec,
    parents: &[&Individual],
    templates: &PromptTemplates,
) -> Result<PromptBundle> {
    if parents.len() != strategy.arity() {
        return Err(Error::usage(format!(
            "{strategy} takes {} parent(s), got {}",
            strategy.arity(),
            parents.len()
        )));
    }
    for p in parents {
        if p.feedback.is_none() {
            return Err(Error::usage(format!("parent {} has no feedback", p.id)));
        }
        if p.code.trim().is_empty() {
            return Err(Error::usage(format!("parent {} has no code", p.id)));
        }
    }
    let template = templates
        .strategies
        .get(&strategy)
        .ok_or_else(|| Error::config(format!("no template for strategy {strategy}")))?;

    let tb = templates.testbench_block(spec);
    let mut vars = templates.common_vars(spec, &tb);
    for (i, p) in parents.iter().enumerate() {
        let n = i + 1;
        vars.push((format!("parent_thought_{n}"), p.thought.trim()));
        vars.push((format!("parent_code_{n}"), p.code.trim_end_matches('\n')));
        vars.push((format!("parent_feedback_{n}"), p.feedback.as_deref().unwrap_or("").trim()));
    }
    Ok(PromptBundle {
        system_text: templates.system.trim_end().to_string(),
        user_text: render_template(template, &vars),
        kind: PromptKind::Evolve(strategy),
        parent_ids: parents.iter().map(|p| p.id).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseError {
    /// No complete fenced code block in the response.
    #[error("no_code: response contains no fenced code block")]
    NoCode,
    /// The first fenced code block is blank.
    #[error("empty_code: the code block is empty")]
    EmptyCode,
}

impl ParseError {
    pub fn code(self) -> &'static str {
        match self {
            ParseError::NoCode => "no_code",
            ParseError::EmptyCode => "empty_code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub thought: String,
    pub code: String,
    /// False when no tagged Thought section was found and the thought was
    /// recovered from surrounding prose.
    pub thought_tagged: bool,
}

/// Placeholder thought when a response carries no prose at all.
pub const MISSING_THOUGHT: &str = "(no thought given)";

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn thought_heading(line: &str) -> Option<&str> {
    let t = line.trim().trim_start_matches('#').trim().trim_start_matches('*');
    let head = t.get(..7)?;
    if !head.eq_ignore_ascii_case("thought") {
        return None;
    }
    let rest = t[7..].trim_start_matches('*').trim_start();
    if rest.is_empty() {
        return Some("");
    }
    // inline form "Thought: text"
    rest.strip_prefix(':')
        .map(|r| r.trim_start_matches('*').trim())
}

/// Markdown heading or a standalone bold label such as `**Code:**`.
fn is_heading(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('#') || (t.len() > 4 && t.starts_with("**") && (t.ends_with("**") || t.ends_with("**:")))
}

/// Extracts the Thought section and the first fenced code block.
pub fn parse_llm_response(text: &str) -> std::result::Result<ParsedResponse, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let open = lines.iter().position(|l| is_fence(l)).ok_or(ParseError::NoCode)?;
    let close = lines[open + 1..]
        .iter()
        .position(|l| is_fence(l))
        .map(|i| open + 1 + i)
        .ok_or(ParseError::NoCode)?;
    let code = lines[open + 1..close].join("\n").trim().to_string();
    if code.is_empty() {
        return Err(ParseError::EmptyCode);
    }

    let prose = &lines[..open];
    let mut thought_lines: Option<Vec<&str>> = None;
    for (i, line) in prose.iter().enumerate() {
        if let Some(inline) = thought_heading(line) {
            let mut body = vec![inline];
            for l in &prose[i + 1..] {
                if is_heading(l) {
                    break;
                }
                body.push(l);
            }
            thought_lines = Some(body);
            break;
        }
    }
    let (thought, tagged) = match thought_lines {
        Some(body) => (body.join("\n").trim().to_string(), true),
        None => {
            let recovered = prose
                .iter()
                .filter(|l| !is_heading(l))
                .copied()
                .collect::<Vec<_>>()
                .join("\n")
                .trim()
                .to_string();
            log::debug!("response has no tagged Thought section; using preceding prose");
            (recovered, false)
        }
    };
    let thought = if thought.is_empty() {
        MISSING_THOUGHT.to_string()
    } else {
        thought
    };
    Ok(ParsedResponse {
        thought,
        code,
        thought_tagged: tagged,
    })
}

/// Renders a (thought, code) pair in the format the prompts ask for.
pub fn render_response(thought: &str, code: &str) -> String {
    format!("## Thought\n{}\n\n## Code\n```verilog\n{}\n```\n", thought.trim(), code.trim())
}
