//! Deterministic replay backend.
//!
//! A [`Script`] is either one sequential list (the i-th call gets the i-th
//! response) or a set of routes selected by prompt content and sampling
//! seed, each with its own cursor. Routed scripts stay deterministic when
//! independent sessions interleave on a worker pool.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, FinishReason, GatewayError, RawReply, SamplingParams, Transport, TransportFailure};

/// Injected fault for one script entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureDirective {
    /// Fail the first `times` attempts at this entry with a transient error.
    Timeout { times: u32 },
    /// Reject with a non-retryable status.
    Refuse { status: u16 },
}

impl FromStr for FailureDirective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("timeout") {
            let rest = rest.trim_start_matches(['×', '*', 'x', ':', ' ']);
            let times = if rest.is_empty() {
                1
            } else {
                rest.parse().map_err(|_| format!("bad timeout count in {s:?}"))?
            };
            return Ok(Self::Timeout { times });
        }
        if let Some(rest) = s.strip_prefix("refuse") {
            let rest = rest.trim_start_matches([':', ' ']);
            let status = if rest.is_empty() {
                400
            } else {
                rest.parse().map_err(|_| format!("bad refusal status in {s:?}"))?
            };
            return Ok(Self::Refuse { status });
        }
        Err(format!("unknown failure directive {s:?}"))
    }
}

impl fmt::Display for FailureDirective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Timeout { times } => write!(f, "timeout×{times}"),
            Self::Refuse { status } => write!(f, "refuse:{status}"),
        }
    }
}

impl Serialize for FailureDirective {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FailureDirective {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureDirective>,
    /// Overrides the whitespace token count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
}

impl ScriptedResponse {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            reasoning: None,
            failure: None,
            completion_tokens: None,
            finish_reason: None,
        }
    }

    pub fn with_reasoning(content: impl Into<String>, reasoning: impl Into<String>) -> Self {
        Self {
            reasoning: Some(reasoning.into()),
            ..Self::text(content)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRoute {
    /// Every string must occur somewhere in the request's message contents.
    #[serde(default)]
    pub contains: Vec<String>,
    /// Only match requests sampled with this seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub responses: Vec<ScriptedResponse>,
    /// Wrap around instead of reporting exhaustion.
    #[serde(default)]
    pub cycle: bool,
}

impl ScriptRoute {
    pub fn new(contains: &[&str], responses: Vec<ScriptedResponse>) -> Self {
        Self {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            seed: None,
            responses,
            cycle: false,
        }
    }

    pub fn cycling(mut self) -> Self {
        self.cycle = true;
        self
    }

    fn matches(&self, haystack: &str, seed: Option<u64>) -> bool {
        self.seed.is_none_or(|s| Some(s) == seed) && self.contains.iter().all(|c| haystack.contains(c.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Script {
    Sequential(Vec<ScriptedResponse>),
    Routed { routes: Vec<ScriptRoute> },
}

impl From<Vec<ScriptedResponse>> for Script {
    fn from(v: Vec<ScriptedResponse>) -> Self {
        Script::Sequential(v)
    }
}

impl From<Vec<ScriptRoute>> for Script {
    fn from(routes: Vec<ScriptRoute>) -> Self {
        Script::Routed { routes }
    }
}

#[derive(Debug, Default, Clone)]
struct Cursor {
    next: usize,
    failures_served: u32,
}

pub(crate) struct ScriptedTransport {
    routes: Vec<ScriptRoute>,
    sequential: bool,
    state: Mutex<(Vec<Cursor>, u64)>,
    latency: Duration,
}

impl ScriptedTransport {
    pub fn new(script: Script, latency: Duration) -> Result<Self, GatewayError> {
        let (routes, sequential) = match script {
            Script::Sequential(responses) => (vec![ScriptRoute::new(&[], responses)], true),
            Script::Routed { routes } => (routes, false),
        };
        if routes.is_empty() || routes.iter().all(|r| r.responses.is_empty()) {
            return Err(GatewayError::Config("script must contain at least one response".into()));
        }
        Ok(Self {
            state: Mutex::new((vec![Cursor::default(); routes.len()], 0)),
            routes,
            sequential,
            latency,
        })
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<RawReply, TransportFailure> {
        let haystack: String = messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        let reply = {
            let mut guard = self.state.lock().unwrap();
            let (cursors, calls) = &mut *guard;
            *calls += 1;
            let idx = if self.sequential {
                0
            } else {
                let mut matching = self
                    .routes
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.matches(&haystack, params.seed))
                    .map(|(i, _)| i)
                    .peekable();
                let first = *matching
                    .peek()
                    .ok_or_else(|| TransportFailure::Exhausted(format!("no route matches call {calls}")))?;
                // Exhausted non-cycling routes fall through to the next match.
                matching
                    .find(|&i| self.routes[i].cycle || cursors[i].next < self.routes[i].responses.len())
                    .unwrap_or(first)
            };
            let route = &self.routes[idx];
            let cursor = &mut cursors[idx];
            if cursor.next >= route.responses.len() {
                if route.cycle && !route.responses.is_empty() {
                    cursor.next = 0;
                } else {
                    return Err(TransportFailure::Exhausted(format!(
                        "route {idx} has no response left after {} call(s)",
                        route.responses.len()
                    )));
                }
            }
            let entry = &route.responses[cursor.next];
            match entry.failure {
                Some(FailureDirective::Timeout { times }) if cursor.failures_served < times => {
                    cursor.failures_served += 1;
                    Err(TransportFailure::Transient("scripted timeout".into()))
                }
                Some(FailureDirective::Refuse { status }) => {
                    cursor.next += 1;
                    cursor.failures_served = 0;
                    Err(TransportFailure::Refused {
                        status,
                        message: "scripted refusal".into(),
                    })
                }
                _ => {
                    cursor.next += 1;
                    cursor.failures_served = 0;
                    Ok(RawReply {
                        content: entry.content.clone(),
                        reasoning: entry.reasoning.clone(),
                        prompt_tokens: None,
                        completion_tokens: entry.completion_tokens,
                        finish_reason: entry.finish_reason.unwrap_or(FinishReason::Stop),
                    })
                }
            }
        };
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        reply
    }
}
