use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{offspring_quota, rank_cmp, select_parents, survivor_select, EvolutionConfig};
use crate::bandit::BanditState;
use crate::error::{Error, Result};
use crate::eval::{attach_outcome, evaluate, EvalContext, Evaluator, DEFAULT_LOG_TAIL};
use crate::fitness::FitnessWeights;
use crate::llm::{CallRecord, CompletionProvider, Recorder};
use crate::model::{
    BanditSnapshot, EvalOutcome, Fitness, GenerationRecord, Individual, IndividualId, Lineage, PopulationLabel,
    ProblemSpec, StrategyEvent, SCHEMA_VERSION,
};
use crate::prompts::{
    allowed_strategies, build_evolutionary_prompt, build_initial_prompt, parse_llm_response, PromptBundle,
    PromptStrategy, PromptTemplates,
};

/// Flag raised by reports whose best individual never passed simulation.
pub const NO_CORRECT_DESIGN: &str = "no functionally correct design found";

/// Code stored for individuals whose response had no usable code block.
pub const PLACEHOLDER_CODE: &str = "// the model response contained no usable code block";

/// Receives each generation as soon as it is complete.
pub trait Observer {
    fn generation(&mut self, record: &GenerationRecord, calls: &[CallRecord]) -> Result<()>;
}

pub struct NoopObserver;

impl Observer for NoopObserver {
    fn generation(&mut self, _: &GenerationRecord, _: &[CallRecord]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionReport {
    /// All-time best individual.
    pub best: Individual,
    pub found_correct: bool,
    pub history: Vec<GenerationRecord>,
}

impl EvolutionReport {
    /// [`NO_CORRECT_DESIGN`] when nothing passed simulation.
    pub fn flag(&self) -> Option<&'static str> {
        (!self.found_correct).then_some(NO_CORRECT_DESIGN)
    }
}

/// One planned completion: an initial sample or an offspring.
/// A finished job: the new individual and the provider calls made for it.
type Finished = (Individual, Vec<CallRecord>);

struct Job {
    id: IndividualId,
    bundle: PromptBundle,
    lineage: Option<Lineage>,
    label: Option<PopulationLabel>,
    /// Fitness an offspring must beat to earn a Success reward.
    baseline: Fitness,
}

/// Per-offspring random stream, independent of scheduling.
fn slot_rng(seed: u64, generation: u32, slot: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&generation.to_le_bytes());
    key[16..24].copy_from_slice(&(slot as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub struct Engine<'a> {
    spec: &'a ProblemSpec,
    cfg: EvolutionConfig,
    provider: &'a dyn CompletionProvider,
    evaluator: &'a dyn Evaluator,
    templates: &'a PromptTemplates,
    weights: FitnessWeights,
    log_tail: usize,
    next_id: u64,
    generation: Option<u32>,
    population: Vec<Individual>,
    bandits: BanditSnapshot,
    best: Option<Individual>,
}

impl<'a> Engine<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        cfg: &EvolutionConfig,
        provider: &'a dyn CompletionProvider,
        evaluator: &'a dyn Evaluator,
        templates: &'a PromptTemplates,
    ) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let bandit = |label| BanditState::new(allowed_strategies(label), cfg.exploration_c, cfg.temperature);
        Ok(Self {
            spec,
            cfg: cfg.clone(),
            provider,
            evaluator,
            templates,
            weights: cfg.weights_for(spec.circuit_kind),
            log_tail: DEFAULT_LOG_TAIL,
            next_id: 0,
            generation: None,
            population: Vec::new(),
            bandits: BanditSnapshot {
                fail: bandit(PopulationLabel::Fail)?,
                success: bandit(PopulationLabel::Success)?,
            },
            best: None,
        })
    }

    /// Characters of simulator/synthesis log kept in feedback prompts.
    pub fn with_log_tail(mut self, chars: usize) -> Self {
        self.log_tail = chars;
        self
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn bandits(&self) -> &BanditSnapshot {
        &self.bandits
    }

    pub fn best(&self) -> Option<&Individual> {
        self.best.as_ref()
    }

    fn fresh_id(&mut self) -> IndividualId {
        let id = IndividualId(self.next_id);
        self.next_id += 1;
        id
    }

    fn concurrency(&self, jobs: usize) -> usize {
        self.provider
            .max_concurrency()
            .min(self.evaluator.max_concurrency())
            .min(jobs)
            .max(1)
    }

    /// Completes, parses and evaluates one job. Only provider and
    /// environment failures are errors.
    fn execute(&self, job: &Job, generation: u32) -> Result<(Individual, Vec<CallRecord>)> {
        let recorder = Recorder::new(self.provider, Some(job.id));
        let ind = {
            let ctx = EvalContext {
                spec: self.spec,
                evaluator: self.evaluator,
                provider: &recorder,
                templates: self.templates,
                weights: self.weights,
                log_tail: self.log_tail,
            };
            let response = recorder.complete(&job.bundle)?;
            match parse_llm_response(&response.text) {
                Ok(parsed) => {
                    let ind = Individual::new(job.id, parsed.thought, parsed.code, job.lineage.clone(), generation);
                    evaluate(ind, &ctx)?
                }
                Err(e) => {
                    log::info!("{}: response rejected ({})", job.id, e.code());
                    let mut ind = Individual::new(
                        job.id,
                        format!("(response rejected: {})", e.code()),
                        PLACEHOLDER_CODE,
                        job.lineage.clone(),
                        generation,
                    );
                    let outcome = EvalOutcome::sim_failure(format!("response rejected ({}): {e}", e.code()));
                    attach_outcome(&mut ind, outcome, &ctx)?;
                    ind
                }
            }
        };
        Ok((ind, recorder.into_records()))
    }

    /// Runs every job, in parallel when both backends allow it. Results come
    /// back in job order; the first failure in job order is returned.
    fn fan_out(&self, jobs: &[Job], generation: u32) -> Result<Vec<Finished>> {
        let workers = self.concurrency(jobs.len());
        if workers == 1 {
            return jobs.iter().map(|j| self.execute(j, generation)).collect();
        }
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let slots: Mutex<Vec<Option<Result<Finished>>>> =
            Mutex::new((0..jobs.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(AtomicOrdering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, AtomicOrdering::SeqCst);
                    if i >= jobs.len() {
                        break;
                    }
                    let result = self.execute(&jobs[i], generation);
                    if result.is_err() {
                        abort.store(true, AtomicOrdering::SeqCst);
                    }
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
                });
            }
        });
        let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
        let mut out = Vec::with_capacity(jobs.len());
        for slot in slots {
            match slot {
                Some(r) => out.push(r?),
                // only reachable after an earlier job failed
                None => break,
            }
        }
        if out.len() != jobs.len() {
            return Err(Error::usage("evaluation stopped early without an error"));
        }
        Ok(out)
    }

    fn consider_best(&mut self, candidates: &[Individual]) {
        for c in candidates {
            let better = match &self.best {
                None => true,
                Some(b) => rank_cmp(c, b).is_lt(),
            };
            if better {
                self.best = Some(c.clone());
            }
        }
    }

    fn record(&self, offspring: Vec<Individual>, events: Vec<StrategyEvent>) -> GenerationRecord {
        let best = self.best.as_ref().expect("best is set once a population exists");
        let success_count = self
            .population
            .iter()
            .filter(|i| i.outcome().is_some_and(|o| o.sim_passed))
            .count();
        GenerationRecord {
            schema_version: SCHEMA_VERSION,
            generation_index: self.generation.unwrap_or(0),
            population: self.population.clone(),
            offspring,
            strategy_events: events,
            best_so_far: best.id,
            best_fitness: best.fitness_or_min(),
            fail_count: self.population.len() - success_count,
            success_count,
            bandits: self.bandits.clone(),
        }
    }

    /// Samples, evaluates and records generation 0.
    pub fn initialize(&mut self) -> Result<(GenerationRecord, Vec<CallRecord>)> {
        if self.generation.is_some() {
            return Err(Error::usage("engine is already initialized"));
        }
        let jobs: Vec<Job> = (0..self.cfg.population_size)
            .map(|_| Job {
                id: self.fresh_id(),
                bundle: build_initial_prompt(self.spec, self.templates),
                lineage: None,
                label: None,
                baseline: Fitness::NEG_INFINITY,
            })
            .collect();
        let results = self.fan_out(&jobs, 0)?;
        let (population, calls): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        self.generation = Some(0);
        self.consider_best(&population);
        self.population = population;
        Ok((self.record(Vec::new(), Vec::new()), calls.concat()))
    }

    fn plan_offspring(&mut self, generation: u32) -> Result<Vec<Job>> {
        let (fail, success): (Vec<&Individual>, Vec<&Individual>) = self
            .population
            .iter()
            .partition(|i| !i.outcome().is_some_and(|o| o.sim_passed));
        let (lambda_fail, _) = offspring_quota(fail.len(), success.len(), self.cfg.offspring_count);
        let mut plans = Vec::with_capacity(self.cfg.offspring_count);
        for slot in 0..self.cfg.offspring_count {
            let (label, subpop, bandit) = if slot < lambda_fail {
                (PopulationLabel::Fail, &fail, &self.bandits.fail)
            } else {
                (PopulationLabel::Success, &success, &self.bandits.success)
            };
            let mut rng = slot_rng(self.cfg.rng_seed, generation, slot);
            let mut strategy = bandit.select_strategy(&mut rng);
            if strategy.arity() > subpop.len() {
                let infeasible: Vec<PromptStrategy> =
                    bandit.strategies().filter(|s| s.arity() > subpop.len()).collect();
                let resampled = bandit
                    .select_strategy_excluding(&mut rng, &infeasible)
                    .ok_or_else(|| Error::usage(format!("no feasible strategy for the {label} population")))?;
                log::info!(
                    "generation {generation} slot {slot}: {strategy} needs {} parents, {label} has {}; resampled {resampled}",
                    strategy.arity(),
                    subpop.len()
                );
                strategy = resampled;
            }
            let parents = select_parents(label, subpop, strategy, &mut rng)?;
            let baseline = parents
                .iter()
                .map(|p| p.fitness_or_min())
                .max()
                .unwrap_or(Fitness::NEG_INFINITY);
            let bundle = build_evolutionary_prompt(strategy, self.spec, &parents, self.templates)?;
            let lineage = Lineage {
                parents: parents.iter().map(|p| p.id).collect(),
                strategy,
            };
            plans.push((label, bundle, lineage, baseline));
        }
        Ok(plans
            .into_iter()
            .map(|(label, bundle, lineage, baseline)| Job {
                id: self.fresh_id(),
                bundle,
                lineage: Some(lineage),
                label: Some(label),
                baseline,
            })
            .collect())
    }

    /// One generation: offspring, rewards, survivor selection.
    pub fn run_generation(&mut self) -> Result<(GenerationRecord, Vec<CallRecord>)> {
        let generation = match self.generation {
            Some(g) => g + 1,
            None => return Err(Error::usage("run_generation called before initialize")),
        };
        let jobs = self.plan_offspring(generation)?;
        let results = self.fan_out(&jobs, generation)?;
        let (offspring, calls): (Vec<_>, Vec<_>) = results.into_iter().unzip();

        let mut events = Vec::with_capacity(offspring.len());
        for (job, child) in jobs.iter().zip(&offspring) {
            let label = job.label.expect("offspring jobs carry a label");
            let strategy = child.strategy().expect("offspring carry a lineage");
            let earned = match label {
                PopulationLabel::Fail => child.outcome().is_some_and(|o| o.sim_passed),
                PopulationLabel::Success => child.fitness_or_min() > job.baseline,
            };
            let reward = if earned { self.cfg.reward } else { 0.0 };
            let bandit = match label {
                PopulationLabel::Fail => &mut self.bandits.fail,
                PopulationLabel::Success => &mut self.bandits.success,
            };
            bandit.record_reward(strategy, reward)?;
            events.push(StrategyEvent {
                offspring: child.id,
                population: label,
                strategy,
                reward,
            });
        }

        self.population = survivor_select(
            &self.population,
            &offspring,
            self.cfg.population_size,
            self.cfg.elite_per_metric,
        );
        self.consider_best(&offspring);
        self.generation = Some(generation);
        Ok((self.record(offspring, events), calls.concat()))
    }

    /// Checks the environment, initializes, then runs every generation.
    pub fn run(mut self, observer: &mut dyn Observer) -> Result<EvolutionReport> {
        self.evaluator.check_environment()?;
        let mut history = Vec::with_capacity(self.cfg.max_generations as usize + 1);
        let (record, calls) = self.initialize()?;
        observer.generation(&record, &calls)?;
        history.push(record);
        for _ in 0..self.cfg.max_generations {
            let (record, calls) = self.run_generation()?;
            observer.generation(&record, &calls)?;
            history.push(record);
        }
        let best = self.best.expect("initialized engine has a best individual");
        Ok(EvolutionReport {
            found_correct: best.fitness_or_min().is_finite(),
            best,
            history,
        })
    }
}

/// Initialize, run `max_generations` generations and report the all-time
/// best individual.
pub fn run_evolution(
    spec: &ProblemSpec,
    cfg: &EvolutionConfig,
    provider: &dyn CompletionProvider,
    evaluator: &dyn Evaluator,
    templates: &PromptTemplates,
    observer: &mut dyn Observer,
) -> Result<EvolutionReport> {
    Engine::new(spec, cfg, provider, evaluator, templates)?.run(observer)
}
