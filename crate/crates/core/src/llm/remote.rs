use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionProvider, CompletionResult, ProviderError, Semaphore, TokenUsage};
use crate::prompts::{PromptBundle, PromptKind};

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".to_string()
}
fn default_key_var() -> String {
    "OPENAI_API_KEY".to_string()
}
fn default_temperature() -> f64 {
    1.0
}
fn default_top_p() -> f64 {
    0.95
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout() -> f64 {
    120.0
}
fn default_parallel() -> usize {
    4
}
fn default_backoff() -> f64 {
    1.0
}

/// Settings for a chat-completion endpoint. The API key itself is never
/// stored here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(default = "default_endpoint")]
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_key_var")]
    pub api_key_env_var: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Seconds per attempt.
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    /// First backoff delay in seconds; doubles on every retry.
    #[serde(default = "default_backoff")]
    pub retry_base_delay: f64,
    /// Sampling overrides for feedback calls.
    #[serde(default)]
    pub feedback_temperature: Option<f64>,
    #[serde(default)]
    pub feedback_top_p: Option<f64>,
}

impl ProviderConfig {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: default_endpoint(),
            model_name: model_name.into(),
            api_key_env_var: default_key_var(),
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_retries: default_max_retries(),
            request_timeout: default_timeout(),
            max_parallel_requests: default_parallel(),
            retry_base_delay: default_backoff(),
            feedback_temperature: None,
            feedback_top_p: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let check_t = |name: &str, t: f64| {
            if t.is_finite() && t >= 0.0 {
                Ok(())
            } else {
                Err(format!("provider.{name} must be >= 0, got {t}"))
            }
        };
        let check_p = |name: &str, p: f64| {
            if p > 0.0 && p <= 1.0 {
                Ok(())
            } else {
                Err(format!("provider.{name} must be in (0, 1], got {p}"))
            }
        };
        check_t("temperature", self.temperature)?;
        check_p("top_p", self.top_p)?;
        if let Some(t) = self.feedback_temperature {
            check_t("feedback_temperature", t)?;
        }
        if let Some(p) = self.feedback_top_p {
            check_p("feedback_top_p", p)?;
        }
        if !(self.request_timeout > 0.0 && self.request_timeout.is_finite()) {
            return Err(format!("provider.request_timeout must be > 0, got {}", self.request_timeout));
        }
        if self.max_parallel_requests < 1 {
            return Err("provider.max_parallel_requests must be >= 1".into());
        }
        if !(self.retry_base_delay >= 0.0 && self.retry_base_delay.is_finite()) {
            return Err(format!("provider.retry_base_delay must be >= 0, got {}", self.retry_base_delay));
        }
        if self.model_name.trim().is_empty() {
            return Err("provider.model_name must be non-empty".into());
        }
        Ok(())
    }

    /// Backoff before retry number `retry` (1-based), without jitter.
    pub fn backoff(&self, retry: u32) -> Duration {
        let secs = self.retry_base_delay * 2f64.powi(retry.saturating_sub(1) as i32);
        Duration::from_secs_f64(secs.min(300.0))
    }
}

/// Chat-completion HTTP client with retry and a concurrency cap.
pub struct RemoteProvider {
    cfg: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
    in_flight: Semaphore,
}

impl fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("cfg", &self.cfg)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(String, Option<TokenUsage>),
    Retry(String),
    Fatal(ProviderError),
}

impl RemoteProvider {
    /// Resolves the API key from the configured environment variable.
    pub fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        let api_key = std::env::var(&cfg.api_key_env_var).map_err(|_| {
            ProviderError::Config(format!(
                "environment variable {} is not set; export the API key there",
                cfg.api_key_env_var
            ))
        })?;
        Self::with_key(cfg, api_key)
    }

    pub fn with_key(cfg: ProviderConfig, api_key: String) -> Result<Self, ProviderError> {
        cfg.validate().map_err(ProviderError::Config)?;
        let agent_cfg = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(cfg.request_timeout)))
            .build();
        Ok(Self {
            in_flight: Semaphore::new(cfg.max_parallel_requests),
            agent: ureq::Agent::new_with_config(agent_cfg),
            api_key,
            cfg,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    fn request_body(&self, bundle: &PromptBundle) -> serde_json::Value {
        let (temperature, top_p) = match bundle.kind {
            PromptKind::Feedback => (
                self.cfg.feedback_temperature.unwrap_or(self.cfg.temperature),
                self.cfg.feedback_top_p.unwrap_or(self.cfg.top_p),
            ),
            _ => (self.cfg.temperature, self.cfg.top_p),
        };
        json!({
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
            "temperature": temperature,
            "top_p": top_p,
        })
    }

    fn attempt(&self, body: &serde_json::Value, attempt: u32) -> Attempt {
        let sent = self
            .agent
            .post(&self.cfg.endpoint_url)
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(body);
        let mut resp = match sent {
            Ok(r) => r,
            Err(e) => {
                return match e {
                    ureq::Error::Timeout(_)
                    | ureq::Error::Io(_)
                    | ureq::Error::ConnectionFailed
                    | ureq::Error::HostNotFound => Attempt::Retry(e.to_string()),
                    other => Attempt::Fatal(ProviderError::Protocol {
                        attempts: attempt,
                        message: other.to_string(),
                    }),
                }
            }
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Attempt::Fatal(ProviderError::Auth {
                    attempts: attempt,
                    message: format!("HTTP {status}"),
                })
            }
            408 | 429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
            _ => {
                let detail = resp.body_mut().read_to_string().unwrap_or_default();
                return Attempt::Fatal(ProviderError::Protocol {
                    attempts: attempt,
                    message: format!("HTTP {status}: {}", truncate(&detail, 500)),
                });
            }
        }
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(parsed) => match parsed.choices.into_iter().next().and_then(|c| c.message.content) {
                Some(content) => Attempt::Done(
                    content,
                    parsed.usage.map(|u| TokenUsage {
                        prompt_tokens: u.prompt_tokens,
                        completion_tokens: u.completion_tokens,
                    }),
                ),
                None => Attempt::Fatal(ProviderError::Protocol {
                    attempts: attempt,
                    message: "response has no choices[0].message.content".into(),
                }),
            },
            Err(e) => Attempt::Fatal(ProviderError::Protocol {
                attempts: attempt,
                message: format!("malformed response body: {e}"),
            }),
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl CompletionProvider for RemoteProvider {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        let _permit = self.in_flight.acquire();
        let body = self.request_body(bundle);
        let start = Instant::now();
        let max_attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                let jitter = rand::thread_rng().gen_range(1.0..1.25);
                let delay = self.cfg.backoff(attempt - 1).mul_f64(jitter);
                log::warn!("retrying provider call in {:.2}s ({last})", delay.as_secs_f64());
                std::thread::sleep(delay);
            }
            match self.attempt(&body, attempt) {
                Attempt::Done(text, usage) => {
                    return Ok(CompletionResult {
                        text,
                        usage,
                        latency: start.elapsed().as_secs_f64(),
                        attempt_count: attempt,
                    })
                }
                Attempt::Retry(msg) => last = msg,
                Attempt::Fatal(e) => return Err(e),
            }
        }
        Err(ProviderError::Transient {
            attempts: max_attempts,
            message: last,
        })
    }

    fn max_concurrency(&self) -> usize {
        self.cfg.max_parallel_requests
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let cfg = ProviderConfig::new("m");
        assert_eq!(cfg.backoff(1), Duration::from_secs(1));
        assert_eq!(cfg.backoff(2), Duration::from_secs(2));
        assert_eq!(cfg.backoff(3), Duration::from_secs(4));
    }

    #[test]
    fn config_bounds() {
        let mut cfg = ProviderConfig::new("m");
        cfg.validate().unwrap();
        cfg.top_p = 0.0;
        assert!(cfg.validate().is_err());
        cfg.top_p = 1.0;
        cfg.temperature = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_key_env_is_config_error() {
        let mut cfg = ProviderConfig::new("m");
        cfg.api_key_env_var = "RTLEVO_TEST_SURELY_UNSET_KEY".into();
        assert!(matches!(RemoteProvider::new(cfg), Err(ProviderError::Config(_))));
    }

    #[test]
    fn debug_redacts_key() {
        let p = RemoteProvider::with_key(ProviderConfig::new("m"), "sk-secret".into()).unwrap();
        assert!(!format!("{p:?}").contains("sk-secret"));
    }
}
