use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionResult, ProviderError, ScriptError};
use crate::prompts::{PromptBundle, PromptKind, PromptStrategy};

/// Decides whether a script entry answers a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Any,
    Initial,
    Feedback,
    /// Evolutionary prompt of the given strategy.
    Strategy(PromptStrategy),
    /// Substring of the system or user text.
    Contains(String),
}

impl Matcher {
    pub fn accepts(&self, bundle: &PromptBundle) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Initial => bundle.kind == PromptKind::Initial,
            Matcher::Feedback => bundle.kind == PromptKind::Feedback,
            Matcher::Strategy(s) => bundle.kind == PromptKind::Evolve(*s),
            Matcher::Contains(needle) => {
                bundle.user_text.contains(needle.as_str()) || bundle.system_text.contains(needle.as_str())
            }
        }
    }
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub response: String,
    /// How many calls this entry answers before it is used up.
    #[serde(default = "one")]
    pub times: u32,
    /// Sticky entries are never used up.
    #[serde(default)]
    pub sticky: bool,
}

impl ScriptEntry {
    pub fn new(matcher: Matcher, response: impl Into<String>) -> Self {
        Self {
            matcher,
            response: response.into(),
            times: 1,
            sticky: false,
        }
    }

    pub fn sticky(mut self) -> Self {
        self.sticky = true;
        self
    }

    pub fn times(mut self, times: u32) -> Self {
        self.times = times;
        self
    }
}

/// Answers prompts from a fixed script, first matching live entry wins.
#[derive(Debug)]
pub struct ScriptedProvider {
    entries: Mutex<Vec<(ScriptEntry, u32)>>,
}

impl ScriptedProvider {
    pub fn new(script: Vec<ScriptEntry>) -> Result<Self, ProviderError> {
        if script.is_empty() {
            return Err(ProviderError::Config("script must not be empty".into()));
        }
        Ok(Self {
            entries: Mutex::new(script.into_iter().map(|e| (e.clone(), e.times)).collect()),
        })
    }

    /// Loads a JSON array of [`ScriptEntry`].
    pub fn from_json_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let script: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Self::new(script)
    }

    /// Number of entries not yet used up, sticky ones included.
    pub fn remaining(&self) -> usize {
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .filter(|(e, left)| e.sticky || *left > 0)
            .count()
    }
}

fn describe(kind: PromptKind) -> String {
    match kind {
        PromptKind::Initial => "initial".into(),
        PromptKind::Feedback => "feedback".into(),
        PromptKind::Evolve(s) => s.to_string(),
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        let mut any_live = false;
        for (entry, left) in entries.iter_mut() {
            let live = entry.sticky || *left > 0;
            any_live |= live;
            if live && entry.matcher.accepts(bundle) {
                if !entry.sticky {
                    *left -= 1;
                }
                return Ok(CompletionResult {
                    text: entry.response.clone(),
                    usage: None,
                    latency: 0.0,
                    attempt_count: 1,
                });
            }
        }
        Err(if any_live {
            ScriptError::Unmatched(describe(bundle.kind)).into()
        } else {
            ScriptError::Exhausted.into()
        })
    }
}
