//! Chat-completions backend over blocking HTTP.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, Completion, FinishReason, GenerationRequest};

/// Environment variable holding the bearer token, if any.
pub const API_KEY_ENV: &str = "SCORE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    /// Base URL without the `/chat/completions` suffix.
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), api_key: None, timeout: Duration::from_secs(300) }
    }

    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Fatal(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, client })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

/// Request body for one single-turn exchange.
pub(crate) fn request_body(request: &GenerationRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &request.system_prompt {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": request.prompt}));
    let mut body = json!({
        "model": request.model_name,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

pub(crate) fn parse_reply(body: &Value) -> Result<Completion, BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Fatal("response has no choices".into()))?;
    let text = match choice.pointer("/message/content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) => String::new(),
        _ => return Err(BackendError::Fatal("response choice has no message content".into())),
    };
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    Ok(Completion { text, finish_reason })
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.base_url.trim_end_matches('/'))
    }

    fn complete(&self, request: &GenerationRequest, _attempt: u32) -> Result<Completion, BackendError> {
        let mut call = self.client.post(self.endpoint()).json(&request_body(request));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        let text = response.text().map_err(|e| BackendError::Transient(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("malformed response: {e}")))?;
        parse_reply(&body)
    }
}
