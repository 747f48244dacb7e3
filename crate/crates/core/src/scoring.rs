//! Turns stored generations into prediction matrices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ItemBody, ItemSet};
use crate::extraction::{extract_boxed_answer, extract_mcq_answer, Prediction};
use crate::inference::GenerationRecord;
use crate::metrics::{Answer, Gold, PredictionMatrix, PredictionSet, TaggedPrediction};
use crate::perturbation::{CatalogError, PromptCatalog, Task, Variant, VariantKey};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("store has records for several models ({0}); pick one")]
    SeveralModels(String),
    #[error("store has no records{0}")]
    NoRecords(String),
    #[error("record for item `{0}` which is not in the dataset")]
    UnknownItem(String),
    #[error("store is incomplete: {missing} {task} generation(s) missing, e.g. item `{example}`")]
    Incomplete { task: Task, missing: usize, example: String },
    #[error("{task} record for item `{item}` has variant key {key}")]
    BadKey { task: Task, item: String, key: VariantKey },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Recovers the variant a record was generated under. Choice-order and
/// sampling variants always use the catalog's fixed prompt.
pub fn record_variant(record: &GenerationRecord, catalog: &PromptCatalog) -> Result<Variant, ScoreError> {
    let r = &record.request;
    let fixed = catalog.fixed().prompt_id;
    match (r.task, r.variant_key) {
        (Task::PromptRobustness, VariantKey::Prompt(id)) => Ok(Variant::prompt(id)),
        (Task::ChoiceOrder, VariantKey::Position(p)) => Ok(Variant::choice(fixed, p)),
        (Task::NonGreedy, VariantKey::Seed(s)) => {
            Ok(Variant { temperature: r.temperature, ..Variant::non_greedy(fixed, s) })
        }
        (task, key) => Err(ScoreError::BadKey { task, item: r.item_id.clone(), key }),
    }
}

/// Extracted prediction plus its canonical answer.
pub fn extract_answer(item: &crate::dataset::Item, variant: &Variant, raw_text: &str) -> (Prediction, Option<Answer>) {
    match &item.body {
        ItemBody::Mcq { options, .. } => {
            let p = extract_mcq_answer(raw_text, options.len());
            let answer = p.letter_index().map(|shown| Answer::Option(variant.original_option_index(item, shown)));
            (p, answer)
        }
        ItemBody::Math { .. } => {
            let p = extract_boxed_answer(raw_text);
            let answer = p.value().map(|v| Answer::Math(v.to_string()));
            (p, answer)
        }
    }
}

fn gold(item: &crate::dataset::Item) -> Gold {
    match &item.body {
        ItemBody::Mcq { gold_index, .. } => Gold::Option(*gold_index),
        ItemBody::Math { gold_answer } => Gold::Math(gold_answer.clone()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub total: usize,
    pub failed: usize,
    pub truncated: usize,
}

#[derive(Debug, Clone)]
pub struct Scored {
    pub model_name: String,
    pub tasks: Vec<(Task, PredictionMatrix)>,
    pub extraction: ExtractionSummary,
}

/// Builds one matrix per task present in `records`. Items keep dataset order
/// and predictions are sorted by variant key, so the result does not depend
/// on record order. Every item must have every variant seen for its task.
pub fn score_records(
    records: &[GenerationRecord],
    items: &ItemSet,
    catalog: &PromptCatalog,
    model: Option<&str>,
) -> Result<Scored, ScoreError> {
    let models: BTreeSet<&str> = records.iter().map(|r| r.request.model_name.as_str()).collect();
    let model_name = match model {
        Some(m) => m.to_string(),
        None if models.len() > 1 => {
            return Err(ScoreError::SeveralModels(models.into_iter().collect::<Vec<_>>().join(", ")))
        }
        None => models.into_iter().next().ok_or_else(|| ScoreError::NoRecords(String::new()))?.to_string(),
    };

    // task -> item -> key -> prediction
    let mut grouped: BTreeMap<Task, BTreeMap<&str, BTreeMap<VariantKey, TaggedPrediction>>> = BTreeMap::new();
    let mut extraction = ExtractionSummary::default();
    for record in records.iter().filter(|r| r.request.model_name == model_name) {
        let r = &record.request;
        let item = items.get(&r.item_id).ok_or_else(|| ScoreError::UnknownItem(r.item_id.clone()))?;
        let variant = record_variant(record, catalog)?;
        let (prediction, answer) = extract_answer(item, &variant, &record.raw_text);
        extraction.total += 1;
        extraction.failed += usize::from(!prediction.is_extracted());
        extraction.truncated += usize::from(record.finish_reason == crate::inference::FinishReason::Length);
        grouped
            .entry(r.task)
            .or_default()
            .entry(item.id.as_str())
            .or_default()
            .insert(r.variant_key, TaggedPrediction::new(variant, answer));
    }
    if grouped.is_empty() {
        return Err(ScoreError::NoRecords(format!(" for model `{model_name}`")));
    }

    let mut tasks = Vec::new();
    for (task, by_item) in grouped {
        let keys: BTreeSet<VariantKey> = by_item.values().flat_map(|m| m.keys().copied()).collect();
        let mut missing = 0usize;
        let mut example = None;
        for item in &items.items {
            let have = by_item.get(item.id.as_str()).map_or(0, |m| m.len());
            if have < keys.len() {
                missing += keys.len() - have;
                example.get_or_insert_with(|| item.id.clone());
            }
        }
        if let Some(example) = example {
            return Err(ScoreError::Incomplete { task, missing, example });
        }
        let sets = items
            .items
            .iter()
            .map(|item| PredictionSet {
                item_id: item.id.clone(),
                category: item.category.clone(),
                gold: gold(item),
                predictions: by_item[item.id.as_str()].values().cloned().collect(),
            })
            .collect();
        tasks.push((task, PredictionMatrix::new(items.family, sets)));
    }
    Ok(Scored { model_name, tasks, extraction })
}
