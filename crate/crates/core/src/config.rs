//! Optional TOML configuration; command-line flags override every field.
//!
//! ```toml
//! model = "llama-3.1-8b-instruct"
//! backend = "http://localhost:8000/v1"
//! concurrency = 8
//! max_tokens = 1024
//! seeds = [101, 102, 103, 104, 105]
//! tasks = ["prompt", "choice", "nongreedy"]
//! exclusions = ["mmlu-pro:2", "agieval:2"]
//! aggregate_mode = "pooled"
//!
//! [equiv]
//! abs_tol = 1e-9
//! rel_tol = 1e-9
//! samples = 8
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::math::EquivConfig;
use crate::metrics::AggregateMode;
use crate::perturbation::{ShortItemPolicy, Task};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub backend: Option<String>,
    pub concurrency: Option<usize>,
    pub max_tokens: Option<u32>,
    pub seeds: Option<Vec<u64>>,
    pub tasks: Option<Vec<Task>>,
    pub positions: Option<usize>,
    pub short_items: Option<ShortItemPolicy>,
    pub system_prompt: Option<String>,
    pub retry_attempts: Option<u32>,
    pub retry_base_ms: Option<u64>,
    pub timeout_secs: Option<u64>,
    pub exclusions: Option<Vec<String>>,
    pub aggregate_mode: Option<AggregateMode>,
    pub failed_pairs_similar: Option<bool>,
    pub equiv: Option<EquivConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(String, std::io::Error),
    #[error("invalid config {0}: {1}")]
    Parse(String, toml::de::Error),
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(path.display().to_string(), e))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(FileConfig::default()), FileConfig::load)
    }
}
