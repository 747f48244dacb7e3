//! Per-task and cross-task robustness reports.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    accuracy_range, agreement_stats, consistency_rate, AgreementStats, MetricConfig, MetricError, PredictionMatrix,
    PredictionSet,
};
use crate::dataset::DatasetFamily;
use crate::perturbation::{Task, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    /// Consistency over all included predictions of an item at once.
    #[default]
    Pooled,
    /// Average of the per-task consistency rates.
    Mean,
}

impl FromStr for AggregateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(AggregateMode::Pooled),
            "mean" => Ok(AggregateMode::Mean),
            other => Err(format!("unknown aggregation mode `{other}` (expected pooled or mean)")),
        }
    }
}

impl fmt::Display for AggregateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregateMode::Pooled => "pooled",
            AggregateMode::Mean => "mean",
        })
    }
}

/// A prompt-rewording variant left out of aggregation, written `family:prompt_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub family: DatasetFamily,
    pub prompt_id: u32,
}

impl Exclusion {
    /// The prompt demanding a bare single-letter reply, an outlier on both
    /// multiple-choice families.
    pub fn defaults() -> Vec<Exclusion> {
        vec![
            Exclusion { family: DatasetFamily::MmluPro, prompt_id: 2 },
            Exclusion { family: DatasetFamily::AgiEval, prompt_id: 2 },
        ]
    }

    pub fn matches(&self, family: DatasetFamily, variant: &Variant) -> bool {
        self.family == family && variant.task == Task::PromptRobustness && variant.prompt_id == self.prompt_id
    }

    pub fn parse_list(text: &str) -> Result<Vec<Exclusion>, String> {
        text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for Exclusion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (family, id) = s.rsplit_once(':').ok_or_else(|| format!("exclusion `{s}` is not family:prompt_id"))?;
        Ok(Exclusion {
            family: family.parse()?,
            prompt_id: id.parse().map_err(|_| format!("exclusion `{s}` has a bad prompt id"))?,
        })
    }
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.prompt_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub items: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub cr: f64,
}

/// Accuracy range, consistency and agreement for one matrix. Percentages
/// throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub family: DatasetFamily,
    pub items: usize,
    pub predictions_per_item: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub cr: f64,
    pub per_variant: Vec<(String, f64)>,
    pub per_category: BTreeMap<String, CategorySummary>,
    pub agreement: AgreementStats,
}

pub fn robustness_report(matrix: &PredictionMatrix, config: &MetricConfig) -> Result<RobustnessReport, MetricError> {
    let (min_count, max_count) = matrix.prediction_counts().ok_or(MetricError::Empty)?;
    let variants = matrix.variants();
    let range = accuracy_range(matrix, &variants, config)?;
    let cr = consistency_rate(matrix, config)?;
    let thresholds: Vec<usize> = (2..=min_count).collect();
    let agreement = agreement_stats(matrix, &thresholds, config)?;

    let mut per_category = BTreeMap::new();
    for name in matrix.categories() {
        let sub = matrix.category(&name);
        let per_variant = variants
            .iter()
            .map(|v| Ok((v.label(), super::micro_accuracy(&sub, v, config)?)))
            .collect::<Result<Vec<_>, MetricError>>()?;
        let r = super::AccuracyRange::from_values(per_variant)?;
        per_category.insert(
            name,
            CategorySummary {
                items: sub.sets.len(),
                mean_accuracy: r.mean,
                min_accuracy: r.min,
                max_accuracy: r.max,
                cr: consistency_rate(&sub, config)?,
            },
        );
    }
    Ok(RobustnessReport {
        family: matrix.family,
        items: matrix.sets.len(),
        predictions_per_item: max_count,
        mean_accuracy: range.mean,
        min_accuracy: range.min,
        max_accuracy: range.max,
        cr,
        per_variant: range.per_variant,
        per_category,
        agreement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: Task,
    pub report: RobustnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub family: DatasetFamily,
    pub mode: AggregateMode,
    /// Consistency under the selected mode.
    pub cr: f64,
    pub pooled_cr: f64,
    pub mean_task_cr: f64,
    pub excluded: Vec<String>,
    /// Pooled view over every included variant.
    pub overall: RobustnessReport,
    /// Each task on its own, with no exclusions.
    pub tasks: Vec<TaskSummary>,
}

fn item_ids(matrix: &PredictionMatrix) -> Vec<&str> {
    let mut ids: Vec<&str> = matrix.sets.iter().map(|s| s.item_id.as_str()).collect();
    ids.sort_unstable();
    ids
}

/// Combines per-task matrices over the same items. Exclusions for other
/// families are ignored; an exclusion for this family that names no prompt
/// variant is an error.
pub fn aggregate(
    tasks: &[(Task, PredictionMatrix)],
    mode: AggregateMode,
    exclusions: &[Exclusion],
    config: &MetricConfig,
) -> Result<AggregateReport, MetricError> {
    let (_, first) = tasks.first().ok_or(MetricError::Empty)?;
    let family = first.family;
    let reference = item_ids(first);
    for (task, m) in tasks {
        if m.family != family || item_ids(m) != reference {
            return Err(MetricError::CoverageMismatch(format!("task {task} covers different items")));
        }
    }

    let active: Vec<Exclusion> = exclusions.iter().copied().filter(|e| e.family == family).collect();
    for e in &active {
        let found = tasks.iter().any(|(_, m)| m.variants().iter().any(|v| e.matches(family, v)));
        if !found {
            return Err(MetricError::UnknownExclusion(e.to_string()));
        }
    }
    let keep = |v: &Variant| !active.iter().any(|e| e.matches(family, v));
    let filtered: Vec<PredictionMatrix> = tasks.iter().map(|(_, m)| m.filter_variants(keep)).collect();

    let mut pooled_sets: Vec<PredictionSet> = Vec::with_capacity(first.sets.len());
    for set in &first.sets {
        let mut predictions = Vec::new();
        for m in &filtered {
            let other = m.sets.iter().find(|s| s.item_id == set.item_id).expect("coverage checked");
            predictions.extend(other.predictions.iter().cloned());
        }
        pooled_sets.push(PredictionSet { predictions, ..set.clone() });
    }
    let pooled = PredictionMatrix { family, mode: first.mode, sets: pooled_sets };
    let overall = robustness_report(&pooled, config)?;

    let mut task_crs = Vec::new();
    for m in &filtered {
        task_crs.push(consistency_rate(m, config)?);
    }
    let mean_task_cr = task_crs.iter().sum::<f64>() / task_crs.len() as f64;

    let summaries = tasks
        .iter()
        .map(|(task, m)| Ok(TaskSummary { task: *task, report: robustness_report(m, config)? }))
        .collect::<Result<Vec<_>, MetricError>>()?;

    Ok(AggregateReport {
        family,
        mode,
        cr: match mode {
            AggregateMode::Pooled => overall.cr,
            AggregateMode::Mean => mean_task_cr,
        },
        pooled_cr: overall.cr,
        mean_task_cr,
        excluded: active.iter().map(Exclusion::to_string).collect(),
        overall,
        tasks: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Answer, Gold, TaggedPrediction};

    fn matrix(family: DatasetFamily, variants: &[Variant], answers: &[&[usize]]) -> PredictionMatrix {
        let sets = answers
            .iter()
            .enumerate()
            .map(|(k, row)| PredictionSet {
                item_id: format!("q{k}"),
                category: if k % 2 == 0 { "even".into() } else { "odd".into() },
                gold: Gold::Option(0),
                predictions: variants
                    .iter()
                    .zip(row.iter())
                    .map(|(v, &a)| TaggedPrediction::new(v.clone(), Some(Answer::Option(a))))
                    .collect(),
            })
            .collect();
        PredictionMatrix::new(family, sets)
    }

    fn mmlu_tasks() -> Vec<(Task, PredictionMatrix)> {
        let prompts: Vec<Variant> = (0..10).map(Variant::prompt).collect();
        let choices: Vec<Variant> = (0..10).map(|p| Variant::choice(4, p)).collect();
        let seeds: Vec<Variant> = (101..106).map(|s| Variant::non_greedy(4, s)).collect();
        let fam = DatasetFamily::MmluPro;
        vec![
            (Task::PromptRobustness, matrix(fam, &prompts, &[&[0; 10], &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0]])),
            (Task::ChoiceOrder, matrix(fam, &choices, &[&[0; 10], &[0; 10]])),
            (Task::NonGreedy, matrix(fam, &seeds, &[&[0, 0, 0, 0, 1], &[0; 5]])),
        ]
    }

    #[test]
    fn pooled_size_after_default_exclusion() {
        let r =
            aggregate(&mmlu_tasks(), AggregateMode::Pooled, &Exclusion::defaults(), &MetricConfig::default()).unwrap();
        assert_eq!(r.overall.predictions_per_item, 24);
        assert_eq!(r.excluded, vec!["mmlu-pro:2".to_string()]);
        assert_eq!(r.overall.per_variant.len(), 24);
        let unfiltered = aggregate(&mmlu_tasks(), AggregateMode::Pooled, &[], &MetricConfig::default()).unwrap();
        assert_eq!(unfiltered.overall.predictions_per_item, 25);
    }

    #[test]
    fn single_task_pooled_equals_task_cr() {
        let tasks = mmlu_tasks()[2..].to_vec();
        let r = aggregate(&tasks, AggregateMode::Pooled, &[], &MetricConfig::default()).unwrap();
        assert_eq!(r.cr, consistency_rate(&tasks[0].1, &MetricConfig::default()).unwrap());
    }

    #[test]
    fn mean_mode_averages_tasks() {
        let v: Vec<Variant> = (0..2).map(Variant::prompt).collect();
        let s: Vec<Variant> = (1..3).map(|x| Variant::non_greedy(5, x)).collect();
        let fam = DatasetFamily::AgiEval;
        // Five items each; CR 60 and 80.
        let a = matrix(fam, &v, &[&[0, 0], &[0, 0], &[0, 0], &[0, 1], &[0, 1]]);
        let b = matrix(fam, &s, &[&[0, 0], &[0, 0], &[0, 0], &[0, 0], &[0, 1]]);
        let r = aggregate(
            &[(Task::PromptRobustness, a), (Task::NonGreedy, b)],
            AggregateMode::Mean,
            &[],
            &MetricConfig::default(),
        )
        .unwrap();
        assert!((r.cr - 70.0).abs() < 1e-12);
        assert_eq!(r.mode, AggregateMode::Mean);
    }

    #[test]
    fn coverage_and_exclusion_errors() {
        let mut tasks = mmlu_tasks();
        tasks[1].1.sets.pop();
        assert!(matches!(
            aggregate(&tasks, AggregateMode::Pooled, &[], &MetricConfig::default()),
            Err(MetricError::CoverageMismatch(_))
        ));
        let bad = [Exclusion { family: DatasetFamily::MmluPro, prompt_id: 42 }];
        assert!(matches!(
            aggregate(&mmlu_tasks(), AggregateMode::Pooled, &bad, &MetricConfig::default()),
            Err(MetricError::UnknownExclusion(_))
        ));
    }

    #[test]
    fn per_category_ranges() {
        let r = robustness_report(&mmlu_tasks()[0].1, &MetricConfig::default()).unwrap();
        let odd = &r.per_category["odd"];
        // Item q1 answers 1 under prompt 0 and 0 elsewhere: accuracies 0 and 100.
        assert_eq!((odd.min_accuracy, odd.max_accuracy), (0.0, 100.0));
        assert!((odd.mean_accuracy - 90.0).abs() < 1e-12);
        assert!((odd.cr - 80.0).abs() < 1e-12);
        assert_eq!(r.per_category["even"].cr, 100.0);
    }

    #[test]
    fn exclusion_parsing() {
        assert_eq!(Exclusion::parse_list("mmlu-pro:2, agieval:2").unwrap(), Exclusion::defaults());
        assert!("mmlu-pro".parse::<Exclusion>().is_err());
        assert!("nope:1".parse::<Exclusion>().is_err());
    }
}
