//! Bounded-concurrency execution of a run plan against a store.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use serde::Serialize;
use thiserror::Error;

use super::store::{Store, StoreError};
use super::{generate, Backend, GenerationRecord, GenerationRequest, RetryPolicy};
use crate::dataset::ItemSet;
use crate::perturbation::{PlanError, RunPlan};

pub const DEFAULT_CONCURRENCY: usize = 8;

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub model_name: String,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Set from outside to stop handing out new requests.
    pub cancel: Option<Arc<AtomicBool>>,
    /// Stop after persisting this many new records.
    pub stop_after: Option<usize>,
}

impl BatchOptions {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            concurrency: DEFAULT_CONCURRENCY,
            retry: RetryPolicy::default(),
            cancel: None,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub planned: usize,
    pub completed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub cancelled: bool,
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("plan is for {plan}, items are {items}")]
    FamilyMismatch { plan: String, items: String },
}

/// Every request of the plan, item-major in plan order.
pub fn plan_requests(plan: &RunPlan, items: &ItemSet, model_name: &str) -> Result<Vec<GenerationRequest>, PlanError> {
    let mut out = Vec::with_capacity(items.len() * plan.variants.len());
    for item in &items.items {
        for variant in &plan.variants {
            out.push(GenerationRequest {
                item_id: item.id.clone(),
                task: variant.task,
                variant_key: variant.key(),
                prompt: plan.prompt_for(item, variant)?,
                temperature: variant.temperature,
                seed: variant.seed,
                max_tokens: plan.max_tokens,
                model_name: model_name.to_string(),
                system_prompt: plan.system_prompt.clone(),
            });
        }
    }
    Ok(out)
}

/// Generates every plan request missing from `store`.
///
/// Workers run concurrently but records are persisted in plan order, so the
/// store contents do not depend on scheduling. Failed generations are counted
/// and left out of the store, so a later run retries them.
pub fn run_batch(
    plan: &RunPlan,
    items: &ItemSet,
    backend: &dyn Backend,
    store: &mut Store,
    options: &BatchOptions,
) -> Result<RunSummary, BatchError> {
    if plan.family != items.family {
        return Err(BatchError::FamilyMismatch { plan: plan.family.to_string(), items: items.family.to_string() });
    }
    let all = plan_requests(plan, items, &options.model_name)?;
    let mut summary = RunSummary { planned: all.len(), ..RunSummary::default() };
    let pending: Vec<GenerationRequest> = all.into_iter().filter(|r| !store.contains(&r.resume_key())).collect();
    summary.skipped = summary.planned - pending.len();
    if pending.is_empty() {
        return Ok(summary);
    }

    let stop = AtomicBool::new(false);
    let next = AtomicUsize::new(0);
    let cancelled = || stop.load(Ordering::SeqCst) || options.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));
    let workers = options.concurrency.clamp(1, pending.len());
    let mut store_error = None;

    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, GenerationRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, cancelled) = (&pending, &next, &cancelled);
            scope.spawn(move || loop {
                if cancelled() {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(request) = pending.get(idx) else { break };
                let record = generate(backend, request, &options.retry);
                if tx.send((idx, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffer = BTreeMap::new();
        let mut commit = 0usize;
        for (idx, record) in rx {
            buffer.insert(idx, record);
            while let Some(record) = buffer.remove(&commit) {
                commit += 1;
                if stop.load(Ordering::SeqCst) {
                    continue;
                }
                if record.is_error() {
                    log::warn!("{}: {}", record.resume_key(), record.error.as_deref().unwrap_or("failed"));
                    summary.failed += 1;
                    continue;
                }
                if let Err(e) = store.append(&record) {
                    store_error = Some(e);
                    stop.store(true, Ordering::SeqCst);
                    continue;
                }
                summary.completed += 1;
                if options.stop_after.is_some_and(|n| summary.completed >= n) {
                    stop.store(true, Ordering::SeqCst);
                }
            }
        }
    });

    if let Some(e) = store_error {
        return Err(e.into());
    }
    summary.cancelled = summary.completed + summary.failed < pending.len();
    log::info!(
        "run: {} planned, {} completed, {} skipped, {} failed{}",
        summary.planned,
        summary.completed,
        summary.skipped,
        summary.failed,
        if summary.cancelled { ", cancelled" } else { "" }
    );
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetFamily, Item};
    use crate::inference::{read_store, MockBackend, MockScript};
    use crate::perturbation::{build_run_plan, load_prompt_catalog, RunConfig};

    fn setup(n: usize) -> (RunPlan, ItemSet) {
        let items = (0..n)
            .map(|i| Item::mcq(format!("q{i}"), "Q?", (0..10).map(|o| format!("o{o}")).collect(), i % 10, "c"))
            .collect();
        let set = ItemSet::new(DatasetFamily::MmluPro, items).unwrap();
        let catalog = load_prompt_catalog(DatasetFamily::MmluPro).unwrap();
        (build_run_plan(&catalog, &RunConfig::default(), &set).unwrap(), set)
    }

    fn options() -> BatchOptions {
        BatchOptions { retry: RetryPolicy::no_delay(3), ..BatchOptions::new("m") }
    }

    #[test]
    fn full_run_then_resume_is_noop() {
        let (plan, set) = setup(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let backend = MockBackend::default();
        let mut store = Store::open(&path).unwrap();
        let s = run_batch(&plan, &set, &backend, &mut store, &options()).unwrap();
        assert_eq!((s.planned, s.completed, s.skipped, s.failed), (100, 100, 0, 0));
        let again = run_batch(&plan, &set, &backend, &mut store, &options()).unwrap();
        assert_eq!((again.completed, again.skipped), (0, 100));
        assert_eq!(read_store(&path).unwrap().records.len(), 100);
    }

    #[test]
    fn stop_after_then_resume() {
        let (plan, set) = setup(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let backend = MockBackend::default();
        let mut store = Store::open(&path).unwrap();
        let first =
            run_batch(&plan, &set, &backend, &mut store, &BatchOptions { stop_after: Some(17), ..options() }).unwrap();
        assert_eq!(first.completed, 17);
        assert!(first.cancelled);
        let rest = run_batch(&plan, &set, &backend, &mut store, &options()).unwrap();
        assert_eq!((rest.completed, rest.skipped), (58, 17));
    }

    #[test]
    fn failures_are_retried_next_run() {
        let (plan, set) = setup(2);
        let mut script = MockScript::default();
        script.failures.insert("q1|prompt:3".into(), 3);
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(&dir.path().join("s.jsonl")).unwrap();
        let s = run_batch(&plan, &set, &MockBackend::new(script), &mut store, &options()).unwrap();
        assert_eq!((s.completed, s.failed), (49, 1));
        let s = run_batch(&plan, &set, &MockBackend::default(), &mut store, &options()).unwrap();
        assert_eq!((s.completed, s.skipped), (1, 49));
    }

    #[test]
    fn cancel_flag_stops_early() {
        let (plan, set) = setup(2);
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(&dir.path().join("s.jsonl")).unwrap();
        let flag = Arc::new(AtomicBool::new(true));
        let s = run_batch(
            &plan,
            &set,
            &MockBackend::default(),
            &mut store,
            &BatchOptions { cancel: Some(flag), ..options() },
        )
        .unwrap();
        assert_eq!(s.completed, 0);
        assert!(s.cancelled);
    }
}
