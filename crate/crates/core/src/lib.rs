//! Evolutionary search over LLM-generated RTL.
//!
//! A population of (Thought, Code, Feedback) individuals is split into a Fail
//! and a Success sub-population by simulation verdict. Each generation asks a
//! language model to apply prompt operators chosen by a per-population
//! UCB/softmax bandit, evaluates the offspring with simulation and synthesis,
//! and keeps the per-metric PPA elites plus the fittest individuals.

pub mod bandit;
pub mod error;
pub mod eval;
pub mod evolution;
pub mod fitness;
pub mod llm;
pub mod model;
pub mod prompts;
pub mod runner;

pub use error::{Error, Result};
