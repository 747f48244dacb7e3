//! Provenance written next to every store and embedded in every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetFamily;
use crate::perturbation::{RunConfig, ShortItemPolicy, Task, NON_GREEDY_TEMPERATURE};

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every effective setting of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub tasks: Vec<Task>,
    pub seeds: Vec<u64>,
    pub positions: usize,
    pub greedy_temperature: f64,
    pub sampling_temperature: f64,
    pub max_tokens: u32,
    pub short_items: ShortItemPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub exclusions: Vec<String>,
    pub concurrency: usize,
    pub retry_attempts: u32,
}

impl ConfigSnapshot {
    pub fn new(
        family: DatasetFamily,
        config: &RunConfig,
        exclusions: Vec<String>,
        concurrency: usize,
        retry_attempts: u32,
    ) -> Self {
        Self {
            tasks: config.tasks.clone(),
            seeds: config.seeds.clone(),
            positions: config.positions.unwrap_or_else(|| family.default_positions()),
            greedy_temperature: 0.0,
            sampling_temperature: NON_GREEDY_TEMPERATURE,
            max_tokens: config.max_tokens,
            short_items: config.short_items,
            system_prompt: config.system_prompt.clone(),
            exclusions,
            concurrency,
            retry_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_name: String,
    pub backend_id: String,
    pub family: DatasetFamily,
    pub dataset_digest: String,
    pub plan_digest: String,
    pub config: ConfigSnapshot,
    pub harness_version: String,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest {path} is invalid: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("store was produced with a different {field} ({existing} vs {requested}); use a new --out path")]
    Mismatch { field: &'static str, existing: String, requested: String },
}

pub fn manifest_path(store: &Path) -> PathBuf {
    let mut name = store.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    store.with_file_name(name)
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Option<Self>, ManifestError> {
        let display = path.display().to_string();
        match std::fs::read_to_string(path) {
            Ok(text) => {
                serde_json::from_str(&text).map(Some).map_err(|source| ManifestError::Parse { path: display, source })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(ManifestError::Io { path: display, source }),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| ManifestError::Io { path: path.display().to_string(), source })
    }

    /// Whether a store made under `self` may be extended under `requested`.
    pub fn check_resume(&self, requested: &RunManifest) -> Result<(), ManifestError> {
        let checks = [
            ("model", &self.model_name, &requested.model_name),
            ("dataset", &self.dataset_digest, &requested.dataset_digest),
            ("run plan", &self.plan_digest, &requested.plan_digest),
        ];
        for (field, existing, wanted) in checks {
            if existing != wanted {
                return Err(ManifestError::Mismatch { field, existing: existing.clone(), requested: wanted.clone() });
            }
        }
        Ok(())
    }

    /// Whether two reports were produced under comparable conditions.
    pub fn comparable(&self, other: &RunManifest) -> Result<(), String> {
        if self.harness_version != other.harness_version {
            return Err(format!("harness versions {} and {}", self.harness_version, other.harness_version));
        }
        if self.family == other.family {
            if self.dataset_digest != other.dataset_digest {
                return Err(format!("different {} datasets", self.family));
            }
            let (a, b) = (&self.config, &other.config);
            if a.tasks != b.tasks || a.seeds != b.seeds || a.max_tokens != b.max_tokens || a.positions != b.positions {
                return Err(format!("different {} run settings", self.family));
            }
        }
        Ok(())
    }
}
