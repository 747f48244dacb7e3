//! End-to-end workflows: run a plan against a backend, score a store.

use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::dataset::{load_dataset, DatasetError, DatasetFamily, ItemSet, LoadOptions};
use crate::inference::{
    read_store, run_batch, Backend, BackendError, BatchError, BatchOptions, HttpBackend, HttpConfig, MockBackend,
    MockScript, RetryPolicy, RunSummary, ScriptError, Store, StoreError, DEFAULT_CONCURRENCY,
};
use crate::manifest::{manifest_path, ConfigSnapshot, ManifestError, RunManifest, HARNESS_VERSION};
use crate::metrics::{aggregate, AggregateMode, Exclusion, MetricConfig, MetricError};
use crate::perturbation::{build_run_plan, load_prompt_catalog, CatalogError, PlanError, RunConfig, RunPlan};
use crate::report::ScoreReport;
use crate::scoring::{score_records, ScoreError};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no manifest next to store {0}; was it written by `score run`?")]
    MissingManifest(String),
    #[error("manifest is for {manifest}, scoring as {requested}")]
    FamilyMismatch { manifest: DatasetFamily, requested: DatasetFamily },
    #[error("dataset differs from the one the store was generated from")]
    DatasetChanged,
    #[error("unknown backend `{0}` (expected mock, mock:<script.json> or an http(s) URL)")]
    BadBackend(String),
}

impl OrchestratorError {
    pub fn is_backend(&self) -> bool {
        matches!(self, OrchestratorError::Backend(_) | OrchestratorError::BadBackend(_) | OrchestratorError::Script(_))
    }
}

/// Where generations come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock(Option<PathBuf>),
    Http(String),
}

impl BackendSpec {
    pub fn parse(text: &str) -> Result<Self, OrchestratorError> {
        if text == "mock" {
            Ok(BackendSpec::Mock(None))
        } else if let Some(path) = text.strip_prefix("mock:") {
            Ok(BackendSpec::Mock(Some(PathBuf::from(path))))
        } else if text.starts_with("http://") || text.starts_with("https://") {
            Ok(BackendSpec::Http(text.to_string()))
        } else {
            Err(OrchestratorError::BadBackend(text.to_string()))
        }
    }

    pub fn build(&self, timeout: Duration) -> Result<Box<dyn Backend>, OrchestratorError> {
        Ok(match self {
            BackendSpec::Mock(None) => Box::new(MockBackend::default()),
            BackendSpec::Mock(Some(path)) => Box::new(MockBackend::new(MockScript::load(path)?)),
            BackendSpec::Http(url) => {
                let config = HttpConfig { timeout, ..HttpConfig::new(url.clone()).with_env_key() };
                Box::new(HttpBackend::new(config)?)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub dataset: PathBuf,
    pub family: DatasetFamily,
    pub lenient: bool,
    pub config: RunConfig,
    pub model: String,
    pub out: PathBuf,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub exclusions: Vec<Exclusion>,
    pub cancel: Option<Arc<AtomicBool>>,
    pub stop_after: Option<usize>,
}

impl RunRequest {
    pub fn new(
        dataset: impl Into<PathBuf>,
        family: DatasetFamily,
        model: impl Into<String>,
        out: impl Into<PathBuf>,
    ) -> Self {
        Self {
            dataset: dataset.into(),
            family,
            lenient: false,
            config: RunConfig::default(),
            model: model.into(),
            out: out.into(),
            concurrency: DEFAULT_CONCURRENCY,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(300),
            exclusions: Exclusion::defaults(),
            cancel: None,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub manifest: RunManifest,
    pub store: PathBuf,
}

fn load_items(path: &Path, family: DatasetFamily, lenient: bool) -> Result<ItemSet, OrchestratorError> {
    let loaded = load_dataset(path, family, LoadOptions { lenient })?;
    for w in &loaded.warnings {
        log::warn!("{}: {w}", path.display());
    }
    if !loaded.skipped.is_empty() {
        log::warn!("{}: skipped {} invalid record(s)", path.display(), loaded.skipped.len());
    }
    Ok(loaded.set)
}

pub fn prepare_plan(items: &ItemSet, config: &RunConfig) -> Result<RunPlan, OrchestratorError> {
    let catalog = load_prompt_catalog(items.family)?;
    Ok(build_run_plan(&catalog, config, items)?)
}

/// Builds the plan, checks the manifest of an existing store, runs the
/// missing generations and writes the manifest.
pub fn execute_run(request: &RunRequest, backend: &dyn Backend) -> Result<RunOutcome, OrchestratorError> {
    let items = load_items(&request.dataset, request.family, request.lenient)?;
    let plan = prepare_plan(&items, &request.config)?;
    let manifest = RunManifest {
        model_name: request.model.clone(),
        backend_id: backend.id(),
        family: request.family,
        dataset_digest: items.digest(),
        plan_digest: plan.digest(),
        config: ConfigSnapshot::new(
            request.family,
            &request.config,
            request.exclusions.iter().map(Exclusion::to_string).collect(),
            request.concurrency,
            request.retry.max_attempts,
        ),
        harness_version: HARNESS_VERSION.to_string(),
    };
    let mpath = manifest_path(&request.out);
    match RunManifest::read(&mpath)? {
        Some(existing) => existing.check_resume(&manifest)?,
        None if read_store(&request.out)?.records.is_empty() => {}
        None => return Err(OrchestratorError::MissingManifest(request.out.display().to_string())),
    }
    let mut store = Store::open(&request.out)?;
    manifest.write(&mpath)?;
    let options = BatchOptions {
        model_name: request.model.clone(),
        concurrency: request.concurrency,
        retry: request.retry,
        cancel: request.cancel.clone(),
        stop_after: request.stop_after,
    };
    let summary = run_batch(&plan, &items, backend, &mut store, &options)?;
    Ok(RunOutcome { summary, manifest, store: request.out.clone() })
}

#[derive(Debug, Clone)]
pub struct ScoreRequest {
    pub store: PathBuf,
    pub dataset: PathBuf,
    pub family: DatasetFamily,
    pub lenient: bool,
    pub mode: AggregateMode,
    pub exclusions: Vec<Exclusion>,
    pub metric: MetricConfig,
}

impl ScoreRequest {
    pub fn new(store: impl Into<PathBuf>, dataset: impl Into<PathBuf>, family: DatasetFamily) -> Self {
        Self {
            store: store.into(),
            dataset: dataset.into(),
            family,
            lenient: false,
            mode: AggregateMode::default(),
            exclusions: Exclusion::defaults(),
            metric: MetricConfig::default(),
        }
    }
}

/// Scores a store against its dataset. A pure function of the inputs.
pub fn execute_score(request: &ScoreRequest) -> Result<ScoreReport, OrchestratorError> {
    let manifest = RunManifest::read(&manifest_path(&request.store))?
        .ok_or_else(|| OrchestratorError::MissingManifest(request.store.display().to_string()))?;
    if manifest.family != request.family {
        return Err(OrchestratorError::FamilyMismatch { manifest: manifest.family, requested: request.family });
    }
    let items = load_items(&request.dataset, request.family, request.lenient)?;
    if items.digest() != manifest.dataset_digest {
        return Err(OrchestratorError::DatasetChanged);
    }
    let catalog = load_prompt_catalog(request.family)?;
    let records = read_store(&request.store)?.records;
    let scored = score_records(&records, &items, &catalog, Some(&manifest.model_name))?;
    let aggregate = aggregate(&scored.tasks, request.mode, &request.exclusions, &request.metric)?;
    Ok(ScoreReport { manifest, extraction: scored.extraction, aggregate })
}
