//! Generation requests, backends, the append-only store and the batch runner.

mod batch;
mod http;
mod mock;
mod store;

use std::fmt;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturbation::{Task, VariantKey, DEFAULT_MAX_TOKENS};

pub use batch::{plan_requests, run_batch, BatchError, BatchOptions, RunSummary, DEFAULT_CONCURRENCY};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{MockBackend, MockScript, ScriptError};
pub use store::{decode_line, encode_line, read_store, Store, StoreError, StoreScan};

/// One single-turn completion to request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub item_id: String,
    pub task: Task,
    pub variant_key: VariantKey,
    pub prompt: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

impl GenerationRequest {
    pub fn resume_key(&self) -> ResumeKey {
        ResumeKey {
            model_name: self.model_name.clone(),
            item_id: self.item_id.clone(),
            task: self.task,
            variant_key: self.variant_key,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be non-negative, got {}", self.temperature));
        }
        Ok(())
    }
}

/// Identity of a generation across runs; one record per key in a finished store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResumeKey {
    pub model_name: String,
    pub item_id: String,
    pub task: Task,
    pub variant_key: VariantKey,
    pub seed: Option<u64>,
}

impl fmt::Display for ResumeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.model_name, self.item_id, self.task, self.variant_key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// A request echoed together with what the backend produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    #[serde(flatten)]
    pub request: GenerationRequest,
    pub raw_text: String,
    pub backend_id: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub attempt_count: u32,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationRecord {
    pub fn resume_key(&self) -> ResumeKey {
        self.request.resume_key()
    }

    pub fn is_error(&self) -> bool {
        self.finish_reason == FinishReason::Error
    }
}

/// Text returned by a backend for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate limits, server errors.
    #[error("transient backend failure: {0}")]
    Transient(String),
    /// Retrying would not help: bad request, authentication, malformed reply.
    #[error("backend failure: {0}")]
    Fatal(String),
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    /// One attempt at a completion; `attempt` starts at 1.
    fn complete(&self, request: &GenerationRequest, attempt: u32) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << (attempt.saturating_sub(2)).min(16))
    }
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Runs one request with retries. Never fails: exhausted retries and fatal
/// errors come back as records with `finish_reason = error`.
pub fn generate(backend: &dyn Backend, request: &GenerationRequest, retry: &RetryPolicy) -> GenerationRecord {
    let record =
        |raw_text: String, attempt_count: u32, finish_reason: FinishReason, error: Option<String>| GenerationRecord {
            request: request.clone(),
            raw_text,
            backend_id: backend.id(),
            timestamp: now_millis(),
            attempt_count,
            finish_reason,
            error,
        };
    if let Err(message) = request.validate() {
        return record(String::new(), 0, FinishReason::Error, Some(message));
    }
    let max_attempts = retry.max_attempts.max(1);
    let mut last_error = String::new();
    for attempt in 1..=max_attempts {
        if attempt > 1 {
            let delay = retry.delay_before(attempt);
            if !delay.is_zero() {
                thread::sleep(delay);
            }
        }
        match backend.complete(request, attempt) {
            Ok(done) => return record(done.text, attempt, done.finish_reason, None),
            Err(BackendError::Fatal(message)) => {
                return record(String::new(), attempt, FinishReason::Error, Some(message));
            }
            Err(BackendError::Transient(message)) => {
                log::warn!("{} attempt {attempt}/{max_attempts}: {message}", request.resume_key());
                last_error = message;
            }
        }
    }
    record(String::new(), max_attempts, FinishReason::Error, Some(last_error))
}
