use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rtlevo::runner::{self, Overrides, RunConfig};
use rtlevo::Error;

/// Evolve functionally correct, PPA-optimized RTL with a language model.
#[derive(Debug, Parser)]
#[command(name = "rtlevo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the evolutionary search for one problem.
    Run(RunArgs),
    /// Summarize a finished (or aborted) run directory.
    Report {
        /// Run directory written by `run`.
        run_dir: PathBuf,
    },
    /// Synthesize a reference design and print its PPA as JSON.
    RefPpa {
        #[arg(long)]
        config: PathBuf,
        /// Reference RTL file.
        #[arg(long)]
        design: PathBuf,
    },
    /// Load and check a configuration without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides evolution.rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    keep_artifacts: bool,
    /// Overrides evolution.max_generations.
    #[arg(long)]
    generations: Option<u32>,
    /// Print the generation-0 prompts and exit without calling a provider.
    #[arg(long)]
    dry_run: bool,
}

const EXIT_ABORT: u8 = 1;
const EXIT_NOT_FOUND: u8 = 2;

fn hint(err: &Error) -> Option<&'static str> {
    match err {
        Error::Environment(_) => Some("install the missing tool or fix the evaluator.toolchain paths, then rerun"),
        Error::Provider(rtlevo::llm::ProviderError::Auth { .. }) => {
            Some("check the API key in the environment variable named by provider.remote.api_key_env_var")
        }
        Error::Provider(rtlevo::llm::ProviderError::Transient { .. }) => {
            Some("the endpoint kept failing; raise provider.remote.max_retries or try again later")
        }
        Error::Provider(rtlevo::llm::ProviderError::Script(_)) => Some("extend the script or mark entries sticky"),
        Error::Ineligible(_) => Some("the problem has no PPA baseline; supply problem.reference_ppa instead"),
        _ => None,
    }
}

fn load(config: &Path) -> Result<RunConfig, Error> {
    RunConfig::load(config)
}

fn run(args: RunArgs) -> Result<u8, Error> {
    let mut cfg = load(&args.config)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        output_dir: args.out,
        keep_artifacts: args.keep_artifacts,
        generations: args.generations,
    })?;
    if args.dry_run {
        for (i, bundle) in runner::dry_run(&cfg)?.iter().enumerate() {
            println!("=== prompt {i} (system) ===\n{}\n=== prompt {i} (user) ===\n{}\n", bundle.system_text, bundle.user_text);
        }
        return Ok(0);
    }
    let summary = runner::run(&cfg)?;
    let best = &summary.report.best;
    println!("run directory: {}", summary.run_dir.display());
    println!("best individual: {} (generation {}, fitness {})", best.id, best.generation_born, best.fitness_or_min());
    if let Some(flag) = &summary.report.flag {
        println!("{flag}");
        return Ok(EXIT_NOT_FOUND);
    }
    Ok(0)
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run(args) => run(args),
        Command::Report { run_dir } => {
            let data = runner::load_run(&run_dir)?;
            print!("{}", runner::render_report(&data)?);
            Ok(0)
        }
        Command::RefPpa { config, design } => {
            let ppa = runner::reference_ppa(&load(&config)?, &design)?;
            println!("{}", serde_json::to_string_pretty(&ppa).expect("metrics serialize"));
            Ok(0)
        }
        Command::ValidateConfig { config } => {
            let cfg = load(&config)?;
            println!(
                "{}: ok (problem {}, provider {}, evaluator {}, N={}, lambda={}, G={})",
                config.display(),
                cfg.problem.name,
                cfg.provider.kind(),
                cfg.evaluator.kind(),
                cfg.evolution.population_size,
                cfg.evolution.offspring_count,
                cfg.evolution.max_generations
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            if let Some(h) = hint(&err) {
                eprintln!("hint: {h}");
            }
            log::debug!("{err:?}");
            ExitCode::from(EXIT_ABORT)
        }
    }
}
