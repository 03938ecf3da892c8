use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{SyntheticEvaluatorConfig, ToolchainConfig, DEFAULT_LOG_TAIL};
use crate::evolution::EvolutionConfig;
use crate::llm::{ProviderConfig, SyntheticDesignerConfig};
use crate::model::{CircuitKind, PpaMetrics};

fn default_clock() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
struct RawProblem {
    name: Option<String>,
    description_file: PathBuf,
    #[serde(default)]
    testbench_file: Option<PathBuf>,
    circuit_kind: CircuitKind,
    #[serde(default = "default_clock")]
    target_clock_period: f64,
    #[serde(default)]
    reference_ppa: Option<PpaMetrics>,
    #[serde(default)]
    reference_ppa_file: Option<PathBuf>,
    #[serde(default)]
    reference_design: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawScripted {
    script: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
struct RawProvider {
    remote: Option<ProviderConfig>,
    scripted: Option<RawScripted>,
    synthetic: Option<SyntheticDesignerConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
struct RawEvaluator {
    toolchain: Option<ToolchainConfig>,
    synthetic: Option<SyntheticEvaluatorConfig>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawConfig {
    problem: RawProblem,
    #[serde(default)]
    evolution: EvolutionConfig,
    #[serde(default)]
    provider: RawProvider,
    #[serde(default)]
    evaluator: RawEvaluator,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    keep_artifacts: bool,
    #[serde(default)]
    templates_dir: Option<PathBuf>,
    #[serde(default)]
    include_testbench: bool,
    #[serde(default)]
    log_tail: Option<usize>,
}

/// Where the problem's reference PPA comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Inline(PpaMetrics),
    /// JSON file holding a `PpaMetrics` object.
    File(PathBuf),
    /// Reference RTL synthesized by the configured evaluator at startup.
    Design(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSource {
    pub name: String,
    pub description_file: PathBuf,
    pub testbench_file: Option<PathBuf>,
    pub circuit_kind: CircuitKind,
    pub target_clock_period: f64,
    pub reference: ReferenceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderChoice {
    Remote(ProviderConfig),
    Scripted { script: PathBuf },
    Synthetic(SyntheticDesignerConfig),
}

impl ProviderChoice {
    pub fn kind(&self) -> &'static str {
        match self {
            ProviderChoice::Remote(_) => "remote",
            ProviderChoice::Scripted { .. } => "scripted",
            ProviderChoice::Synthetic(_) => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorChoice {
    Toolchain(Box<ToolchainConfig>),
    Synthetic(SyntheticEvaluatorConfig),
}

impl EvaluatorChoice {
    pub fn kind(&self) -> &'static str {
        match self {
            EvaluatorChoice::Toolchain(_) => "toolchain",
            EvaluatorChoice::Synthetic(_) => "synthetic",
        }
    }
}

/// A loaded run configuration with every path resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source_path: PathBuf,
    pub problem: ProblemSource,
    pub evolution: EvolutionConfig,
    pub provider: ProviderChoice,
    pub evaluator: EvaluatorChoice,
    pub output_dir: PathBuf,
    pub keep_artifacts: bool,
    pub templates_dir: Option<PathBuf>,
    pub include_testbench: bool,
    pub log_tail: usize,
}

fn exactly_one<T>(section: &str, options: Vec<(&str, Option<T>)>) -> Result<T> {
    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
    let mut present: Vec<(&str, T)> = options
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
        .collect();
    match present.len() {
        1 => Ok(present.pop().expect("one element").1),
        0 => Err(Error::config(format!(
            "[{section}] must select one of: {}",
            names.iter().map(|n| format!("{section}.{n}")).collect::<Vec<_>>().join(", ")
        ))),
        _ => Err(Error::config(format!(
            "[{section}] selects more than one kind: {}",
            present.iter().map(|(n, _)| format!("{section}.{n}")).collect::<Vec<_>>().join(", ")
        ))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses config text as if it had been read from `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let raw: RawConfig = serde_ignored::deserialize(de, |p| unknown.push(p.to_string()))
            .map_err(|e| Error::config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        if !unknown.is_empty() {
            return Err(Error::config(format!(
                "{}: unknown key(s): {}",
                path.display(),
                unknown.join(", ")
            )));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        let problem = {
            let p = &raw.problem;
            let reference = exactly_one(
                "problem.reference",
                vec![
                    ("reference_ppa", p.reference_ppa.map(ReferenceSource::Inline)),
                    ("reference_ppa_file", p.reference_ppa_file.as_deref().map(|f| ReferenceSource::File(resolve(f)))),
                    ("reference_design", p.reference_design.as_deref().map(|f| ReferenceSource::Design(resolve(f)))),
                ],
            )?;
            if let ReferenceSource::Inline(ppa) = &reference {
                ppa.validate_positive("problem.reference_ppa")?;
            }
            if !(p.target_clock_period.is_finite() && p.target_clock_period > 0.0) {
                return Err(Error::config(format!(
                    "problem.target_clock_period must be > 0, got {}",
                    p.target_clock_period
                )));
            }
            let description_file = resolve(&p.description_file);
            let name = p.name.clone().unwrap_or_else(|| {
                description_file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "problem".into())
            });
            ProblemSource {
                name,
                description_file,
                testbench_file: p.testbench_file.as_deref().map(resolve),
                circuit_kind: p.circuit_kind,
                target_clock_period: p.target_clock_period,
                reference,
            }
        };

        raw.evolution.validate()?;

        let provider = exactly_one(
            "provider",
            vec![
                ("remote", raw.provider.remote.map(ProviderChoice::Remote)),
                (
                    "scripted",
                    raw.provider.scripted.map(|s| ProviderChoice::Scripted { script: resolve(&s.script) }),
                ),
                ("synthetic", raw.provider.synthetic.map(ProviderChoice::Synthetic)),
            ],
        )?;
        match &provider {
            ProviderChoice::Remote(c) => c.validate().map_err(Error::Config)?,
            ProviderChoice::Synthetic(c) => c.validate().map_err(Error::Config)?,
            ProviderChoice::Scripted { .. } => {}
        }

        let evaluator = exactly_one(
            "evaluator",
            vec![
                (
                    "toolchain",
                    raw.evaluator.toolchain.map(|mut t| {
                        t.liberty_path = resolve(&t.liberty_path);
                        t.workdir_root = t.workdir_root.as_deref().map(resolve);
                        EvaluatorChoice::Toolchain(Box::new(t))
                    }),
                ),
                ("synthetic", raw.evaluator.synthetic.map(EvaluatorChoice::Synthetic)),
            ],
        )?;
        if let EvaluatorChoice::Toolchain(t) = &evaluator {
            t.validate().map_err(Error::Config)?;
        }

        let output_dir = match &raw.output_dir {
            Some(d) => resolve(d),
            None => base.join("runs").join(&problem.name),
        };
        Ok(Self {
            source_path: path.to_path_buf(),
            problem,
            evolution: raw.evolution,
            provider,
            evaluator,
            output_dir,
            keep_artifacts: raw.keep_artifacts,
            templates_dir: raw.templates_dir.as_deref().map(resolve),
            include_testbench: raw.include_testbench,
            log_tail: raw.log_tail.unwrap_or(DEFAULT_LOG_TAIL),
        })
    }
}
