//! Uniform chat-completion interface over OpenAI-compatible endpoints and a
//! deterministic scripted backend.

mod http;
mod reasoning;
mod scripted;

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::pool::Semaphore;
use crate::text::whitespace_tokens;

pub use reasoning::split_think;
pub use scripted::{FailureDirective, Script, ScriptRoute, ScriptedResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One chat turn. `reasoning` carries a separated thinking channel and only
/// appears on assistant messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
            reasoning: None,
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            reasoning: None,
        }
    }

    pub fn assistant(content: impl Into<String>, reasoning: Option<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            reasoning,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.role {
            Role::System | Role::User if self.content.trim().is_empty() => Err(
                GatewayError::InvalidRequest(format!("{} message has empty content", self.role.as_str())),
            ),
            Role::System | Role::User if self.reasoning.is_some() => Err(GatewayError::InvalidRequest(
                "reasoning is only allowed on assistant messages".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Sampling controls forwarded to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    /// `None` means unlimited (sent as `-1`).
    pub top_k: Option<u32>,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            top_k: None,
            repetition_penalty: 1.0,
            max_tokens: 16_384,
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One assistant reply plus usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub message: ChatMessage,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub finish_reason: FinishReason,
    /// Transient failures absorbed by retry before this reply arrived.
    #[serde(default)]
    pub retries: u32,
}

impl Completion {
    /// The backend stopped at the generation cap. Not an error, but callers
    /// should know the answer may be cut short.
    pub fn is_truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

fn default_timeout_secs() -> f64 {
    600.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    8
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

/// Declarative backend description, loadable from a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Url>,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Script>,
    /// Artificial per-call latency of the scripted backend.
    #[serde(default)]
    pub latency_ms: u64,
}

impl BackendSpec {
    pub fn http(endpoint: Url, model_id: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint),
            model_id: model_id.into(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            retry_backoff_ms: default_backoff_ms(),
            api_key_env: default_api_key_env(),
            script: None,
            latency_ms: 0,
        }
    }

    /// A backend that replays `script` instead of talking to a model.
    pub fn scripted(script: impl Into<Script>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_id: "scripted".into(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            retry_backoff_ms: 1,
            api_key_env: default_api_key_env(),
            script: Some(script.into()),
            latency_ms: 0,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.001))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend refused request (status {status}): {message}")]
    Refused { status: u16, message: String },
    #[error("scripted backend exhausted: {0}")]
    ScriptExhausted(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// What a transport hands back before normalisation.
#[derive(Debug, Clone)]
pub(crate) struct RawReply {
    pub content: String,
    pub reasoning: Option<String>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone)]
pub(crate) enum TransportFailure {
    /// Retryable: timeouts, connection resets, 429 and 5xx.
    Transient(String),
    Refused { status: u16, message: String },
    Malformed(String),
    Exhausted(String),
}

pub(crate) trait Transport: Send + Sync {
    fn send(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<RawReply, TransportFailure>;
}

/// Running usage counters for one backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageStats {
    pub calls: u64,
    pub retries: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A live backend: transport, retry policy, in-flight limiter and usage.
pub struct Backend {
    spec: BackendSpec,
    transport: Box<dyn Transport>,
    limiter: Semaphore,
    usage: Mutex<UsageStats>,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("kind", &self.spec.kind)
            .field("model_id", &self.spec.model_id)
            .finish()
    }
}

impl Backend {
    pub fn new(spec: BackendSpec) -> Result<Self, GatewayError> {
        if spec.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        let transport: Box<dyn Transport> = match spec.kind {
            BackendKind::Scripted => {
                if spec.endpoint.is_some() {
                    return Err(GatewayError::Config("scripted backend must not name an endpoint".into()));
                }
                let script = spec
                    .script
                    .clone()
                    .ok_or_else(|| GatewayError::Config("scripted backend requires a script".into()))?;
                Box::new(scripted::ScriptedTransport::new(
                    script,
                    Duration::from_millis(spec.latency_ms),
                )?)
            }
            BackendKind::Http => {
                let endpoint = spec
                    .endpoint
                    .clone()
                    .ok_or_else(|| GatewayError::Config("http backend requires an endpoint".into()))?;
                let api_key = std::env::var(&spec.api_key_env).ok().filter(|k| !k.is_empty());
                Box::new(http::HttpTransport::new(endpoint, spec.model_id.clone(), api_key, spec.timeout())?)
            }
        };
        Ok(Self {
            limiter: Semaphore::new(spec.max_in_flight),
            spec,
            transport,
            usage: Mutex::new(UsageStats::default()),
        })
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn usage(&self) -> UsageStats {
        self.usage.lock().unwrap().clone()
    }

    /// Highest number of simultaneously outstanding requests seen.
    pub fn peak_in_flight(&self) -> usize {
        self.limiter.peak()
    }

    /// Send `messages` and return the assistant reply.
    pub fn complete(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<Completion, GatewayError> {
        let first = messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("message list is empty".into()))?;
        if first.role == Role::Assistant {
            return Err(GatewayError::InvalidRequest(
                "first message must have role system or user".into(),
            ));
        }
        for m in messages {
            m.validate()?;
        }
        params.validate()?;

        let mut retries = 0u32;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.transport.send(messages, params)
            };
            match result {
                Ok(raw) => {
                    let completion = normalise(messages, raw, retries);
                    let mut usage = self.usage.lock().unwrap();
                    usage.calls += 1;
                    usage.retries += u64::from(retries);
                    usage.prompt_tokens += completion.prompt_tokens;
                    usage.completion_tokens += completion.completion_tokens;
                    if completion.is_truncated() {
                        tracing::warn!(model = %self.spec.model_id, "completion truncated at max_tokens");
                    }
                    return Ok(completion);
                }
                Err(TransportFailure::Transient(message)) => {
                    if retries >= self.spec.max_retries {
                        self.usage.lock().unwrap().retries += u64::from(retries);
                        return Err(GatewayError::Transport {
                            attempts: retries + 1,
                            message,
                        });
                    }
                    let delay = self.spec.retry_backoff_ms.saturating_mul(1u64 << retries.min(16));
                    tracing::debug!(attempt = retries + 1, delay_ms = delay, %message, "transient failure, retrying");
                    std::thread::sleep(Duration::from_millis(delay));
                    retries += 1;
                }
                Err(TransportFailure::Refused { status, message }) => {
                    return Err(GatewayError::Refused { status, message })
                }
                Err(TransportFailure::Malformed(m)) => return Err(GatewayError::Protocol(m)),
                Err(TransportFailure::Exhausted(m)) => return Err(GatewayError::ScriptExhausted(m)),
            }
        }
    }
}

fn normalise(messages: &[ChatMessage], raw: RawReply, retries: u32) -> Completion {
    let (reasoning, content) = match raw.reasoning {
        Some(r) => (Some(r), raw.content),
        None => split_think(&raw.content),
    };
    let prompt_tokens = raw
        .prompt_tokens
        .unwrap_or_else(|| messages.iter().map(|m| whitespace_tokens(&m.content)).sum());
    let completion_tokens = raw.completion_tokens.unwrap_or_else(|| {
        whitespace_tokens(&content) + reasoning.as_deref().map_or(0, whitespace_tokens)
    });
    Completion {
        message: ChatMessage::assistant(content, reasoning),
        prompt_tokens,
        completion_tokens,
        finish_reason: raw.finish_reason,
        retries,
    }
}
