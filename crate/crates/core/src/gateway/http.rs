//! OpenAI-compatible `/chat/completions` transport.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use url::Url;

use super::{ChatMessage, FinishReason, GatewayError, RawReply, SamplingParams, Transport, TransportFailure};

pub(crate) struct HttpTransport {
    client: reqwest::blocking::Client,
    url: Url,
    model: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: Url, model: String, api_key: Option<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url: completions_url(&endpoint)?,
            model,
            api_key,
        })
    }
}

/// Accepts either a base (`…/v1`) or the full completions URL.
fn completions_url(endpoint: &Url) -> Result<Url, GatewayError> {
    if endpoint.path().trim_end_matches('/').ends_with("/chat/completions") {
        return Ok(endpoint.clone());
    }
    let mut base = endpoint.clone();
    if !base.path().ends_with('/') {
        base.set_path(&format!("{}/", base.path()));
    }
    base.join("chat/completions")
        .map_err(|e| GatewayError::Config(format!("bad endpoint {endpoint}: {e}")))
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    reasoning_content: Option<String>,
    #[serde(default)]
    reasoning: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

pub(crate) fn request_body(model: &str, messages: &[ChatMessage], params: &SamplingParams) -> serde_json::Value {
    let wire_messages: Vec<_> = messages
        .iter()
        .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
        .collect();
    let mut body = json!({
        "model": model,
        "messages": wire_messages,
        "temperature": params.temperature,
        "top_p": params.top_p,
        "top_k": params.top_k.map_or(-1, i64::from),
        "repetition_penalty": params.repetition_penalty,
        "max_tokens": params.max_tokens,
        "stream": false,
    });
    if let Some(seed) = params.seed {
        body["seed"] = json!(seed);
    }
    body
}

fn parse_finish(reason: Option<&str>) -> FinishReason {
    match reason {
        Some("length") => FinishReason::Length,
        Some("stop") | Some("eos") | None => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    }
}

pub(crate) fn parse_reply(body: &str) -> Result<RawReply, TransportFailure> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| TransportFailure::Malformed(format!("response body: {e}")))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| TransportFailure::Malformed("response has no choices".into()))?;
    let reasoning = choice
        .message
        .reasoning_content
        .or(choice.message.reasoning)
        .filter(|r| !r.is_empty());
    Ok(RawReply {
        content: choice.message.content.unwrap_or_default(),
        reasoning,
        prompt_tokens: wire.usage.as_ref().and_then(|u| u.prompt_tokens),
        completion_tokens: wire.usage.as_ref().and_then(|u| u.completion_tokens),
        finish_reason: parse_finish(choice.finish_reason.as_deref()),
    })
}

impl Transport for HttpTransport {
    fn send(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<RawReply, TransportFailure> {
        let mut req = self
            .client
            .post(self.url.clone())
            .json(&request_body(&self.model, messages, params));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportFailure::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportFailure::Transient(e.to_string()))?;
        if status.is_success() {
            return parse_reply(&text);
        }
        let code = status.as_u16();
        if code == 408 || code == 429 || status.is_server_error() {
            Err(TransportFailure::Transient(format!("status {code}: {}", crate::text::tail(&text, 500))))
        } else {
            Err(TransportFailure::Refused {
                status: code,
                message: crate::text::tail(&text, 500).to_string(),
            })
        }
    }
}
