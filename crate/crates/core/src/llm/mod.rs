//! Text-completion backends.
//!
//! [`RemoteProvider`] speaks the common chat-completion HTTP protocol.
//! [`ScriptedProvider`] and [`SyntheticDesigner`] are deterministic stand-ins
//! for tests and tool-free runs.

mod remote;
mod scripted;
mod synthetic;

use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::IndividualId;
use crate::prompts::{PromptBundle, PromptKind};

pub use remote::{ProviderConfig, RemoteProvider};
pub use scripted::{Matcher, ScriptEntry, ScriptedProvider};
pub use synthetic::{SyntheticDesigner, SyntheticDesignerConfig, DESIGN_TAG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub usage: Option<TokenUsage>,
    /// Wall-clock seconds, including retries.
    pub latency: f64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("no script entry matches the {0} prompt")]
    Unmatched(String),
    #[error("script exhausted")]
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("transient provider failure after {attempts} attempt(s): {message}")]
    Transient { attempts: u32, message: String },
    #[error("provider rejected credentials (attempt {attempts}): {message}")]
    Auth { attempts: u32, message: String },
    #[error("provider protocol error (attempt {attempts}): {message}")]
    Protocol { attempts: u32, message: String },
    #[error("scripted provider: {0}")]
    Script(#[from] ScriptError),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn attempts(&self) -> u32 {
        match self {
            ProviderError::Transient { attempts, .. }
            | ProviderError::Auth { attempts, .. }
            | ProviderError::Protocol { attempts, .. } => *attempts,
            ProviderError::Script(_) | ProviderError::Config(_) => 0,
        }
    }
}

/// A text-completion backend. Implementations are shared across workers.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError>;

    /// How many calls may usefully run at once. Providers whose answers
    /// depend on call order must return 1.
    fn max_concurrency(&self) -> usize {
        1
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        (**self).complete(bundle)
    }

    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

/// One persisted provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: PromptKind,
    pub parent_ids: Vec<IndividualId>,
    /// Individual the call was made for.
    pub subject: Option<IndividualId>,
    pub system: String,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
    pub latency: f64,
    pub attempts: u32,
    pub usage: Option<TokenUsage>,
}

/// Wraps a provider and keeps a record of every call made through it.
pub struct Recorder<'a> {
    inner: &'a dyn CompletionProvider,
    subject: Option<IndividualId>,
    calls: Mutex<Vec<CallRecord>>,
}

impl<'a> Recorder<'a> {
    pub fn new(inner: &'a dyn CompletionProvider, subject: Option<IndividualId>) -> Self {
        Self {
            inner,
            subject,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn into_records(self) -> Vec<CallRecord> {
        self.calls.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl CompletionProvider for Recorder<'_> {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        let result = self.inner.complete(bundle);
        let record = CallRecord {
            kind: bundle.kind,
            parent_ids: bundle.parent_ids.clone(),
            subject: self.subject,
            system: bundle.system_text.clone(),
            prompt: bundle.user_text.clone(),
            response: result.as_ref().ok().map(|r| r.text.clone()),
            error: result.as_ref().err().map(|e| e.to_string()),
            latency: result.as_ref().map(|r| r.latency).unwrap_or(0.0),
            attempts: match &result {
                Ok(r) => r.attempt_count,
                Err(e) => e.attempts(),
            },
            usage: result.as_ref().ok().and_then(|r| r.usage),
        };
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        result
    }

    fn max_concurrency(&self) -> usize {
        self.inner.max_concurrency()
    }
}

/// Counting semaphore bounding in-flight requests.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub(crate) fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.permits.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn semaphore_bounds_concurrency() {
        let sem = Arc::new(Semaphore::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (sem, active, peak) = (sem.clone(), active.clone(), peak.clone());
                s.spawn(move || {
                    let _p = sem.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
