//! Configuration loading, run orchestration and persistence.
//!
//! A run directory holds:
//!
//! - `config.toml`: the configuration file as given
//! - `run.json`: the resolved problem and hyperparameters
//! - `generations.jsonl`: one [`GenerationRecord`] per line
//! - `transcripts.jsonl`: every provider call, tagged with its generation
//! - `artifacts/`: per-individual code, thought and logs, when kept
//! - `report.json`: the final summary

mod config;
mod report;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Evaluator, SyntheticEvaluator, ToolchainEvaluator};
use crate::evolution::{Engine, EvolutionConfig, Observer};
use crate::fitness::FitnessWeights;
use crate::llm::{CallRecord, CompletionProvider, RemoteProvider, ScriptedProvider, SyntheticDesigner};
use crate::model::{BanditSnapshot, GenerationRecord, Individual, PpaMetrics, ProblemSpec, SCHEMA_VERSION};
use crate::prompts::{build_initial_prompt, PromptBundle, PromptTemplates};

pub use config::{EvaluatorChoice, ProblemSource, ProviderChoice, ReferenceSource, RunConfig};
pub use report::{generation_bands, improvement_percent, load_run, render_report, RunData};

pub const CONFIG_FILE: &str = "config.toml";
pub const HEADER_FILE: &str = "run.json";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const ARTIFACTS_DIR: &str = "artifacts";
pub const REPORT_FILE: &str = "report.json";

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub keep_artifacts: bool,
    pub generations: Option<u32>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.evolution.rng_seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        self.keep_artifacts |= o.keep_artifacts;
        if let Some(g) = o.generations {
            self.evolution.max_generations = g;
        }
        self.evolution.validate()
    }
}

/// Resolved problem and hyperparameters, written as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub evolution: EvolutionConfig,
    pub weights: FitnessWeights,
    pub provider: String,
    pub evaluator: String,
    /// Whether candidates were re-simulated after synthesis.
    pub post_synth_check: bool,
}

/// Final summary, written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub schema_version: u32,
    pub problem: String,
    pub generations: u32,
    pub found_correct: bool,
    pub flag: Option<String>,
    pub best: Individual,
    pub bandits: BanditSnapshot,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TranscriptLine<'a> {
    generation: u32,
    #[serde(flatten)]
    call: &'a CallRecord,
}

pub fn build_evaluator(cfg: &RunConfig) -> Result<Box<dyn Evaluator>> {
    Ok(match &cfg.evaluator {
        EvaluatorChoice::Synthetic(c) => Box::new(SyntheticEvaluator::new(c.clone())),
        EvaluatorChoice::Toolchain(t) => {
            let mut t = t.clone();
            if cfg.keep_artifacts {
                t.keep_artifacts = true;
                if t.workdir_root.is_none() {
                    t.workdir_root = Some(cfg.output_dir.join(ARTIFACTS_DIR).join("toolchain"));
                }
            }
            Box::new(ToolchainEvaluator::new(*t)?)
        }
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Builds the problem. A reference design is synthesized with `evaluator`;
/// without one, a design reference is reported as ineligible.
pub fn load_problem(cfg: &RunConfig, evaluator: Option<&dyn Evaluator>) -> Result<ProblemSpec> {
    let p = &cfg.problem;
    let mut spec = ProblemSpec {
        name: p.name.clone(),
        functional_description: read_text(&p.description_file)?,
        testbench_source: match &p.testbench_file {
            Some(f) => read_text(f)?,
            None => String::new(),
        },
        reference_ppa: PpaMetrics::new(1.0, 1.0, 1.0),
        circuit_kind: p.circuit_kind,
        target_clock_period: p.target_clock_period,
    };
    spec.reference_ppa = match &p.reference {
        ReferenceSource::Inline(ppa) => *ppa,
        ReferenceSource::File(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
        ReferenceSource::Design(path) => match evaluator {
            Some(ev) => ev.reference_ppa(&read_text(path)?, &spec)?,
            None => return Err(Error::Ineligible("no evaluator to synthesize the reference design".into())),
        },
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_templates(cfg: &RunConfig) -> Result<PromptTemplates> {
    let mut t = match &cfg.templates_dir {
        Some(dir) => PromptTemplates::load_dir(dir)?,
        None => PromptTemplates::default(),
    };
    t.include_testbench = cfg.include_testbench;
    Ok(t)
}

/// The synthetic designer's stream is offset by the run seed so `--seed`
/// varies it too.
pub fn build_provider(cfg: &RunConfig, spec: &ProblemSpec) -> Result<Box<dyn CompletionProvider>> {
    Ok(match &cfg.provider {
        ProviderChoice::Remote(c) => Box::new(RemoteProvider::new(c.clone())?),
        ProviderChoice::Scripted { script } => Box::new(ScriptedProvider::from_json_file(script)?),
        ProviderChoice::Synthetic(c) => {
            let mut c = c.clone();
            c.seed = c.seed.wrapping_add(cfg.evolution.rng_seed);
            Box::new(SyntheticDesigner::new(c, spec.reference_ppa)?)
        }
    })
}

/// Generation-0 prompts, built without calling any provider.
pub fn dry_run(cfg: &RunConfig) -> Result<Vec<PromptBundle>> {
    let mut cfg = cfg.clone();
    if let ReferenceSource::Design(_) = cfg.problem.reference {
        // the initial prompt does not show reference figures
        cfg.problem.reference = ReferenceSource::Inline(PpaMetrics::new(1.0, 1.0, 1.0));
    }
    let spec = load_problem(&cfg, None)?;
    let templates = load_templates(&cfg)?;
    Ok((0..cfg.evolution.population_size)
        .map(|_| build_initial_prompt(&spec, &templates))
        .collect())
}

/// Synthesizes a reference design once with the configured evaluator.
pub fn reference_ppa(cfg: &RunConfig, design: &Path) -> Result<PpaMetrics> {
    let evaluator = build_evaluator(cfg)?;
    evaluator.check_environment()?;
    let mut cfg = cfg.clone();
    cfg.problem.reference = ReferenceSource::Design(design.to_path_buf());
    load_problem(&cfg, Some(evaluator.as_ref())).map(|spec| spec.reference_ppa)
}

fn json_line(out: &mut impl Write, value: &impl Serialize, path: &Path) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Error::io(path, e.into()))?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Appends records as generations complete, so an aborted run keeps
/// everything up to the failure.
struct RunWriter {
    dir: PathBuf,
    generations: BufWriter<File>,
    transcripts: BufWriter<File>,
    keep_artifacts: bool,
}

impl RunWriter {
    fn create(dir: &Path, keep_artifacts: bool) -> Result<Self> {
        let open = |name: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            generations: open(GENERATIONS_FILE)?,
            transcripts: open(TRANSCRIPTS_FILE)?,
            keep_artifacts,
        })
    }

    fn write_artifacts(&self, inds: &[Individual]) -> Result<()> {
        for ind in inds {
            let dir = self.dir.join(ARTIFACTS_DIR).join(format!("ind-{}", ind.id.0));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut files = vec![("design.v", ind.code.as_str()), ("thought.txt", ind.thought.as_str())];
            if let Some(f) = &ind.feedback {
                files.push(("feedback.txt", f));
            }
            if let Some(o) = ind.outcome() {
                files.push(("sim.log", &o.sim_log));
                files.push(("synth.log", &o.synth_log));
            }
            for (name, text) in files {
                let path = dir.join(name);
                fs::write(&path, text).map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(())
    }
}

impl Observer for RunWriter {
    fn generation(&mut self, record: &GenerationRecord, calls: &[CallRecord]) -> Result<()> {
        let gen_path = self.dir.join(GENERATIONS_FILE);
        json_line(&mut self.generations, record, &gen_path)?;
        self.generations.flush().map_err(|e| Error::io(&gen_path, e))?;
        let tr_path = self.dir.join(TRANSCRIPTS_FILE);
        for call in calls {
            let line = TranscriptLine {
                generation: record.generation_index,
                call,
            };
            json_line(&mut self.transcripts, &line, &tr_path)?;
        }
        self.transcripts.flush().map_err(|e| Error::io(&tr_path, e))?;
        if self.keep_artifacts {
            let fresh = if record.generation_index == 0 {
                &record.population
            } else {
                &record.offspring
            };
            self.write_artifacts(fresh)?;
        }
        log::info!(
            "generation {}: pass rate {:.2}, best {} fitness {}",
            record.generation_index,
            record.pass_rate(),
            record.best_so_far,
            record.best_fitness
        );
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub report: FinalReport,
}

/// Runs one problem end to end and persists the run directory. The
/// environment is checked before anything is written.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let evaluator = build_evaluator(cfg)?;
    evaluator.check_environment()?;
    let spec = load_problem(cfg, Some(evaluator.as_ref()))?;
    let templates = load_templates(cfg)?;
    let provider = build_provider(cfg, &spec)?;

    let dir = &cfg.output_dir;
    if dir.join(GENERATIONS_FILE).exists() {
        return Err(Error::config(format!(
            "{} already holds a run; choose another output directory",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_copy = dir.join(CONFIG_FILE);
    fs::copy(&cfg.source_path, &config_copy).map_err(|e| Error::io(&config_copy, e))?;
    let header = RunHeader {
        schema_version: SCHEMA_VERSION,
        problem: spec.clone(),
        evolution: cfg.evolution.clone(),
        weights: cfg.evolution.weights_for(spec.circuit_kind),
        provider: cfg.provider.kind().into(),
        evaluator: cfg.evaluator.kind().into(),
        post_synth_check: matches!(&cfg.evaluator, EvaluatorChoice::Toolchain(t) if t.post_synth_simulator.is_some()),
    };
    write_json(&dir.join(HEADER_FILE), &header)?;

    let mut writer = RunWriter::create(dir, cfg.keep_artifacts)?;
    let engine = Engine::new(&spec, &cfg.evolution, provider.as_ref(), evaluator.as_ref(), &templates)?
        .with_log_tail(cfg.log_tail);
    let result = engine.run(&mut writer)?;

    let report = FinalReport {
        schema_version: SCHEMA_VERSION,
        problem: spec.name.clone(),
        generations: cfg.evolution.max_generations,
        found_correct: result.found_correct,
        flag: result.flag().map(str::to_string),
        bandits: result
            .history
            .last()
            .map(|r| r.bandits.clone())
            .expect("a finished run has records"),
        best: result.best,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(RunSummary {
        run_dir: dir.clone(),
        report,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
