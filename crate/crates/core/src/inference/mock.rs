//! Deterministic offline backend driven by a response script.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Backend, BackendError, Completion, FinishReason, GenerationRequest};

/// Fallback used when a script names none. `{letter}` is a hash-derived A-D
/// letter, `{digit}` a hash-derived digit.
pub const DEFAULT_MCQ_FALLBACK: &str = "Let me think step by step. The best answer is {letter}.";
pub const DEFAULT_MATH_FALLBACK: &str = "Working through it. The final answer is: $\\boxed{{digit}}$";

/// Responses keyed `"<item_id>|<variant key>"`, e.g. `"q7|prompt:3"`,
/// `"q7|position:2"` or `"q7|seed:101"`. A key of `"*|<variant key>"`
/// applies to every item.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockScript {
    pub backend_id: Option<String>,
    pub responses: BTreeMap<String, String>,
    /// Template for keys without a scripted response.
    pub fallback: Option<String>,
    /// Number of leading attempts that fail transiently, by key.
    pub failures: BTreeMap<String, u32>,
    /// Keys that fail fatally on every attempt.
    pub fatal: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read mock script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid mock script: {0}")]
    Parse(#[from] serde_json::Error),
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScriptError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn key(request: &GenerationRequest) -> String {
        format!("{}|{}", request.item_id, request.variant_key)
    }

    fn lookup<'a, T>(map: &'a BTreeMap<String, T>, request: &GenerationRequest) -> Option<&'a T> {
        map.get(&Self::key(request)).or_else(|| map.get(&format!("*|{}", request.variant_key)))
    }

    fn render(&self, request: &GenerationRequest) -> String {
        if let Some(text) = Self::lookup(&self.script.responses, request) {
            return text.clone();
        }
        let template = match &self.script.fallback {
            Some(t) => t.as_str(),
            None if request.prompt.contains("boxed") => DEFAULT_MATH_FALLBACK,
            None => DEFAULT_MCQ_FALLBACK,
        };
        let hash = Sha256::digest(format!("{}|{}|{}", request.model_name, Self::key(request), request.prompt));
        let letter = (b'A' + hash[0] % 4) as char;
        let digit = (b'0' + hash[1] % 10) as char;
        template
            .replace("{item_id}", &request.item_id)
            .replace("{key}", &request.variant_key.to_string())
            .replace("{seed}", &request.seed.map(|s| s.to_string()).unwrap_or_default())
            .replace("{letter}", &letter.to_string())
            .replace("{digit}", &digit.to_string())
    }
}

/// Treats whitespace-separated words as tokens.
fn truncate_tokens(text: &str, max_tokens: u32) -> Completion {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() > max_tokens as usize {
        Completion { text: words[..max_tokens as usize].join(" "), finish_reason: FinishReason::Length }
    } else {
        Completion { text: text.to_string(), finish_reason: FinishReason::Stop }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        self.script.backend_id.clone().unwrap_or_else(|| "mock".to_string())
    }

    fn complete(&self, request: &GenerationRequest, attempt: u32) -> Result<Completion, BackendError> {
        let key = Self::key(request);
        if self.script.fatal.contains(&key) {
            return Err(BackendError::Fatal(format!("scripted fatal failure for {key}")));
        }
        if Self::lookup(&self.script.failures, request).is_some_and(|&n| attempt <= n) {
            return Err(BackendError::Transient(format!("scripted timeout for {key}")));
        }
        Ok(truncate_tokens(&self.render(request), request.max_tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{generate, RetryPolicy};
    use crate::perturbation::VariantKey;

    fn request(item: &str, key: VariantKey) -> GenerationRequest {
        GenerationRequest {
            item_id: item.into(),
            task: crate::perturbation::Task::ChoiceOrder,
            variant_key: key,
            prompt: "Q".into(),
            temperature: 0.0,
            seed: None,
            max_tokens: 1024,
            model_name: "m".into(),
            system_prompt: None,
        }
    }

    #[test]
    fn scripted_echo() {
        let mut script = MockScript::default();
        script.responses.insert("q1|position:2".into(), "The best answer is C".into());
        let r = generate(&MockBackend::new(script), &request("q1", VariantKey::Position(2)), &RetryPolicy::no_delay(3));
        assert_eq!(r.raw_text, "The best answer is C");
        assert_eq!(r.finish_reason, FinishReason::Stop);
    }

    #[test]
    fn long_output_hits_length() {
        let mut script = MockScript::default();
        script.responses.insert("*|position:0".into(), vec!["tok"; 2000].join(" "));
        let r = generate(&MockBackend::new(script), &request("q1", VariantKey::Position(0)), &RetryPolicy::no_delay(3));
        assert_eq!(r.finish_reason, FinishReason::Length);
        assert_eq!(r.raw_text.split_whitespace().count(), 1024);
    }

    #[test]
    fn scripted_failures() {
        let mut script = MockScript::default();
        script.failures.insert("q1|position:0".into(), 2);
        script.failures.insert("q2|position:0".into(), 10);
        let b = MockBackend::new(script);
        let ok = generate(&b, &request("q1", VariantKey::Position(0)), &RetryPolicy::no_delay(3));
        assert_eq!((ok.finish_reason, ok.attempt_count), (FinishReason::Stop, 3));
        let bad = generate(&b, &request("q2", VariantKey::Position(0)), &RetryPolicy::no_delay(3));
        assert_eq!((bad.finish_reason, bad.attempt_count), (FinishReason::Error, 3));
    }

    #[test]
    fn fallback_is_deterministic_and_extractable() {
        let b = MockBackend::default();
        let req = request("q9", VariantKey::Seed(101));
        let a = b.complete(&req, 1).unwrap();
        assert_eq!(a, b.complete(&req, 2).unwrap());
        assert!(crate::extraction::extract_mcq_answer(&a.text, 4).is_extracted());

        let mut math = req.clone();
        math.prompt = "put it in \\boxed{}".into();
        let m = b.complete(&math, 1).unwrap();
        assert!(crate::extraction::extract_boxed_answer(&m.text).is_extracted());
    }

    #[test]
    fn template_placeholders() {
        let script = MockScript { fallback: Some("{item_id} {key} s={seed}".into()), ..MockScript::default() };
        let mut req = request("q3", VariantKey::Seed(7));
        req.seed = Some(7);
        assert_eq!(MockBackend::new(script).complete(&req, 1).unwrap().text, "q3 seed:7 s=7");
    }
}
