//! Accuracy, accuracy ranges, consistency rate and agreement statistics.
//!
//! The consistency rate of a matrix is the mean over items of the share of
//! unordered prediction pairs that are similar, times 100:
//!
//! ```text
//! CR = 100/|Q| * sum_k  #{(i, j) : i < j, sim(y_i, y_j)} / C(|Y_k|, 2)
//! ```

mod aggregate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Averaging, DatasetFamily};
use crate::math::{equiv_prepared, EquivConfig, PreparedAnswer};
use crate::perturbation::{Task, Variant};

pub use aggregate::{
    aggregate, robustness_report, AggregateMode, AggregateReport, CategorySummary, Exclusion, RobustnessReport,
    TaskSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    LetterEquality,
    SymbolicEquivalence,
}

impl SimilarityMode {
    pub fn for_family(family: DatasetFamily) -> Self {
        match family {
            DatasetFamily::Math => SimilarityMode::SymbolicEquivalence,
            _ => SimilarityMode::LetterEquality,
        }
    }
}

/// An extracted answer in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    /// Index into the item's original option list.
    Option(usize),
    Math(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gold {
    Option(usize),
    Math(String),
}

/// One prediction tagged with its variant; `answer` is `None` when
/// extraction failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedPrediction {
    pub variant: Variant,
    pub answer: Option<Answer>,
}

impl TaggedPrediction {
    pub fn new(variant: Variant, answer: Option<Answer>) -> Self {
        Self { variant, answer }
    }

    pub fn failed(variant: Variant) -> Self {
        Self { variant, answer: None }
    }
}

/// All predictions for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub item_id: String,
    pub category: String,
    pub gold: Gold,
    pub predictions: Vec<TaggedPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    pub family: DatasetFamily,
    pub mode: SimilarityMode,
    pub sets: Vec<PredictionSet>,
}

impl PredictionMatrix {
    pub fn new(family: DatasetFamily, sets: Vec<PredictionSet>) -> Self {
        Self { family, mode: SimilarityMode::for_family(family), sets }
    }

    /// Variants in first-seen order.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out: Vec<Variant> = Vec::new();
        for set in &self.sets {
            for p in &set.predictions {
                if !out.iter().any(|v| same_variant(v, &p.variant)) {
                    out.push(p.variant.clone());
                }
            }
        }
        out
    }

    pub fn categories(&self) -> Vec<String> {
        let mut cats: Vec<String> = self.sets.iter().map(|s| s.category.clone()).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    /// Items of one category.
    pub fn category(&self, name: &str) -> PredictionMatrix {
        let sets = self.sets.iter().filter(|s| s.category == name).cloned().collect();
        PredictionMatrix { family: self.family, mode: self.mode, sets }
    }

    /// Keeps only predictions whose variant satisfies `keep`.
    pub fn filter_variants(&self, keep: impl Fn(&Variant) -> bool) -> PredictionMatrix {
        let sets = self
            .sets
            .iter()
            .map(|s| PredictionSet {
                predictions: s.predictions.iter().filter(|p| keep(&p.variant)).cloned().collect(),
                ..s.clone()
            })
            .collect();
        PredictionMatrix { family: self.family, mode: self.mode, sets }
    }

    pub fn task(&self, task: Task) -> PredictionMatrix {
        self.filter_variants(|v| v.task == task)
    }

    /// Smallest and largest `|Y_k|`.
    pub fn prediction_counts(&self) -> Option<(usize, usize)> {
        let counts = self.sets.iter().map(|s| s.predictions.len());
        Some((counts.clone().min()?, counts.max()?))
    }
}

/// Variants are the same when they name the same task and key.
pub fn same_variant(a: &Variant, b: &Variant) -> bool {
    a.task == b.task && a.key() == b.key()
}

/// Options beyond the similarity mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Count two failed extractions as similar. Off by default: two
    /// non-answers are no evidence of a consistent belief.
    pub failed_pairs_similar: bool,
    pub equiv: EquivConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("item `{item}` has no prediction for variant {variant}")]
    MissingVariant { item: String, variant: String },
    #[error("no items to score")]
    Empty,
    #[error("no variants given")]
    NoVariants,
    #[error("item `{item}` has {count} prediction(s); at least 2 are needed")]
    TooFewPredictions { item: String, count: usize },
    #[error("threshold {threshold} exceeds the {count} predictions of item `{item}`")]
    ThresholdTooLarge { threshold: usize, count: usize, item: String },
    #[error("matrices disagree on items: {0}")]
    CoverageMismatch(String),
    #[error("exclusion `{0}` matches no prompt variant")]
    UnknownExclusion(String),
}

/// A prediction prepared for repeated comparisons.
enum Prepared<'a> {
    Failed,
    Option(usize),
    Math(&'a str, Box<PreparedAnswer>),
}

fn prepare(answer: &Option<Answer>) -> Prepared<'_> {
    match answer {
        None => Prepared::Failed,
        Some(Answer::Option(i)) => Prepared::Option(*i),
        Some(Answer::Math(s)) => Prepared::Math(s, Box::new(PreparedAnswer::new(s))),
    }
}

fn similar(a: &Prepared, b: &Prepared, config: &MetricConfig) -> bool {
    match (a, b) {
        (Prepared::Failed, Prepared::Failed) => config.failed_pairs_similar,
        (Prepared::Failed, _) | (_, Prepared::Failed) => false,
        (Prepared::Option(x), Prepared::Option(y)) => x == y,
        (Prepared::Math(x, px), Prepared::Math(y, py)) => x == y || equiv_prepared(px, py, &config.equiv).equivalent,
        _ => false,
    }
}

/// Pairwise similarity table for one item, computed once per pair.
fn similarity_table(set: &PredictionSet, config: &MetricConfig) -> Vec<Vec<bool>> {
    let prepared: Vec<Prepared> = set.predictions.iter().map(|p| prepare(&p.answer)).collect();
    let n = prepared.len();
    let mut table = vec![vec![false; n]; n];
    for i in 0..n {
        table[i][i] = !matches!(prepared[i], Prepared::Failed) || config.failed_pairs_similar;
        for j in i + 1..n {
            let s = similar(&prepared[i], &prepared[j], config);
            table[i][j] = s;
            table[j][i] = s;
        }
    }
    table
}

pub fn is_correct(prediction: &TaggedPrediction, gold: &Gold, config: &MetricConfig) -> bool {
    match (&prediction.answer, gold) {
        (Some(Answer::Option(i)), Gold::Option(g)) => i == g,
        (Some(Answer::Math(a)), Gold::Math(g)) => {
            a == g || equiv_prepared(&PreparedAnswer::new(a), &PreparedAnswer::new(g), &config.equiv).equivalent
        }
        _ => false,
    }
}

fn variant_prediction<'a>(set: &'a PredictionSet, variant: &Variant) -> Result<&'a TaggedPrediction, MetricError> {
    set.predictions
        .iter()
        .find(|p| same_variant(&p.variant, variant))
        .ok_or_else(|| MetricError::MissingVariant { item: set.item_id.clone(), variant: variant.label() })
}

/// Percentage of items whose prediction under `variant` is correct.
pub fn micro_accuracy(matrix: &PredictionMatrix, variant: &Variant, config: &MetricConfig) -> Result<f64, MetricError> {
    if matrix.sets.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut correct = 0usize;
    for set in &matrix.sets {
        if is_correct(variant_prediction(set, variant)?, &set.gold, config) {
            correct += 1;
        }
    }
    Ok(correct as f64 / matrix.sets.len() as f64 * 100.0)
}

/// Unweighted mean over categories of per-category micro accuracy.
pub fn macro_accuracy(matrix: &PredictionMatrix, variant: &Variant, config: &MetricConfig) -> Result<f64, MetricError> {
    let categories = matrix.categories();
    if categories.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for cat in &categories {
        total += micro_accuracy(&matrix.category(cat), variant, config)?;
    }
    Ok(total / categories.len() as f64)
}

/// Macro or micro accuracy depending on the family.
pub fn accuracy(matrix: &PredictionMatrix, variant: &Variant, config: &MetricConfig) -> Result<f64, MetricError> {
    match matrix.family.averaging() {
        Averaging::Macro => macro_accuracy(matrix, variant, config),
        Averaging::Micro => micro_accuracy(matrix, variant, config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRange {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `(variant label, accuracy)` in the order given.
    pub per_variant: Vec<(String, f64)>,
}

impl AccuracyRange {
    pub fn from_values(per_variant: Vec<(String, f64)>) -> Result<Self, MetricError> {
        if per_variant.is_empty() {
            return Err(MetricError::NoVariants);
        }
        let values: Vec<f64> = per_variant.iter().map(|(_, a)| *a).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Rounding in the mean must not escape [min, max].
        Ok(Self { mean: mean.clamp(min, max), min, max, per_variant })
    }
}

pub fn accuracy_range(
    matrix: &PredictionMatrix,
    variants: &[Variant],
    config: &MetricConfig,
) -> Result<AccuracyRange, MetricError> {
    let per_variant = variants
        .iter()
        .map(|v| Ok((v.label(), accuracy(matrix, v, config)?)))
        .collect::<Result<Vec<_>, MetricError>>()?;
    AccuracyRange::from_values(per_variant)
}

/// Share of similar pairs for one item, in `[0, 1]`.
pub fn item_consistency(set: &PredictionSet, config: &MetricConfig) -> Result<f64, MetricError> {
    let n = set.predictions.len();
    if n < 2 {
        return Err(MetricError::TooFewPredictions { item: set.item_id.clone(), count: n });
    }
    let table = similarity_table(set, config);
    let mut matching = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            matching += table[i][j] as usize;
        }
    }
    Ok(matching as f64 / (n * (n - 1) / 2) as f64)
}

pub fn consistency_rate(matrix: &PredictionMatrix, config: &MetricConfig) -> Result<f64, MetricError> {
    if matrix.sets.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for set in &matrix.sets {
        total += item_consistency(set, config)?;
    }
    Ok(total / matrix.sets.len() as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    /// Percentage of items whose predictions are all pairwise similar.
    pub unanimity: f64,
    /// Threshold `t` to the percentage of items with a cluster of at least `t`
    /// similar predictions.
    pub clusters: BTreeMap<usize, f64>,
}

/// Size of the largest group of mutually similar predictions. Letter
/// similarity is transitive, so grouping by anchor is exact for options;
/// for math answers the first member of each group is its anchor.
fn largest_cluster(table: &[Vec<bool>]) -> usize {
    let mut anchors: Vec<(usize, usize)> = Vec::new();
    for i in 0..table.len() {
        match anchors.iter_mut().find(|(a, _)| table[*a][i]) {
            Some((_, size)) => *size += 1,
            None => anchors.push((i, 1)),
        }
    }
    anchors.iter().map(|(_, s)| *s).max().unwrap_or(0)
}

pub fn agreement_stats(
    matrix: &PredictionMatrix,
    thresholds: &[usize],
    config: &MetricConfig,
) -> Result<AgreementStats, MetricError> {
    if matrix.sets.is_empty() {
        return Err(MetricError::Empty);
    }
    for set in &matrix.sets {
        if let Some(&t) = thresholds.iter().find(|&&t| t > set.predictions.len()) {
            return Err(MetricError::ThresholdTooLarge {
                threshold: t,
                count: set.predictions.len(),
                item: set.item_id.clone(),
            });
        }
    }
    let mut unanimous = 0usize;
    let mut hits: BTreeMap<usize, usize> = thresholds.iter().map(|&t| (t, 0)).collect();
    for set in &matrix.sets {
        let table = similarity_table(set, config);
        let n = table.len();
        if (0..n).all(|i| (i + 1..n).all(|j| table[i][j])) {
            unanimous += 1;
        }
        let largest = largest_cluster(&table);
        for (t, count) in hits.iter_mut() {
            if largest >= *t {
                *count += 1;
            }
        }
    }
    let pct = |c: usize| c as f64 / matrix.sets.len() as f64 * 100.0;
    Ok(AgreementStats { unanimity: pct(unanimous), clusters: hits.into_iter().map(|(t, c)| (t, pct(c))).collect() })
}
