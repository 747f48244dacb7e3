//! Benchmark dataset loading and validation.
//!
//! Datasets are JSON Lines files, one item per line:
//!
//! ```text
//! {"id": "q1", "question": "...", "options": ["..", ".."], "gold_index": 0, "category": "law"}
//! {"id": "m1", "question": "...", "gold_answer": "\\frac{1}{2}", "category": "Level 3"}
//! ```
//!
//! The first shape is a multiple-choice item, the second a free-form math
//! item. MATH difficulty levels live in `category`, so per-category reporting
//! works the same way for every family.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Smallest and largest option counts accepted for a multiple-choice item.
pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 10;

/// Benchmark family. Controls the prompt catalog, the accuracy averaging mode
/// and the option-letter range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetFamily {
    #[serde(rename = "mmlu-pro")]
    MmluPro,
    #[serde(rename = "agieval")]
    AgiEval,
    #[serde(rename = "math")]
    Math,
}

impl DatasetFamily {
    pub const ALL: [DatasetFamily; 3] = [Self::MmluPro, Self::AgiEval, Self::Math];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MmluPro => "mmlu-pro",
            Self::AgiEval => "agieval",
            Self::Math => "math",
        }
    }

    pub fn item_kind(self) -> ItemKind {
        match self {
            Self::MmluPro | Self::AgiEval => ItemKind::Mcq,
            Self::Math => ItemKind::FreeformMath,
        }
    }

    /// Number of option letters the family's prompts allow (A..J or A..E).
    pub fn letter_range(self) -> Option<usize> {
        match self {
            Self::MmluPro => Some(10),
            Self::AgiEval => Some(5),
            Self::Math => None,
        }
    }

    /// Default number of gold positions for the choice-order task.
    pub fn default_positions(self) -> usize {
        match self {
            Self::MmluPro => 10,
            Self::AgiEval => 4,
            Self::Math => 0,
        }
    }

    /// Category-level macro accuracy for MMLU-Pro, micro accuracy otherwise.
    pub fn averaging(self) -> Averaging {
        match self {
            Self::MmluPro => Averaging::Macro,
            Self::AgiEval | Self::Math => Averaging::Micro,
        }
    }
}

impl fmt::Display for DatasetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mmlu-pro" | "mmlupro" | "mmlu-pro-like" => Ok(Self::MmluPro),
            "agieval" | "agieval-like" => Ok(Self::AgiEval),
            "math" | "math-like" => Ok(Self::Math),
            other => Err(format!("unknown dataset family `{other}` (expected mmlu-pro, agieval or math)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItemKind {
    Mcq,
    FreeformMath,
}

/// Answer payload of an item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ItemBody {
    Mcq { options: Vec<String>, gold_index: usize },
    Math { gold_answer: String },
}

/// One benchmark question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: String,
    pub question: String,
    pub body: ItemBody,
    pub category: String,
}

impl Item {
    pub fn mcq(
        id: impl Into<String>,
        question: impl Into<String>,
        options: Vec<String>,
        gold_index: usize,
        category: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            body: ItemBody::Mcq { options, gold_index },
            category: category.into(),
        }
    }

    pub fn math(
        id: impl Into<String>,
        question: impl Into<String>,
        gold_answer: impl Into<String>,
        category: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            body: ItemBody::Math { gold_answer: gold_answer.into() },
            category: category.into(),
        }
    }

    pub fn kind(&self) -> ItemKind {
        match self.body {
            ItemBody::Mcq { .. } => ItemKind::Mcq,
            ItemBody::Math { .. } => ItemKind::FreeformMath,
        }
    }

    pub fn options(&self) -> Option<&[String]> {
        match &self.body {
            ItemBody::Mcq { options, .. } => Some(options),
            ItemBody::Math { .. } => None,
        }
    }

    pub fn gold_index(&self) -> Option<usize> {
        match self.body {
            ItemBody::Mcq { gold_index, .. } => Some(gold_index),
            ItemBody::Math { .. } => None,
        }
    }

    pub fn gold_answer(&self) -> Option<&str> {
        match &self.body {
            ItemBody::Math { gold_answer } => Some(gold_answer),
            ItemBody::Mcq { .. } => None,
        }
    }

    /// Checks the per-item invariants, independent of any dataset context.
    pub fn validate(&self) -> Result<(), RecordErrorKind> {
        if self.id.trim().is_empty() {
            return Err(RecordErrorKind::EmptyId);
        }
        if self.question.trim().is_empty() {
            return Err(RecordErrorKind::EmptyQuestion);
        }
        match &self.body {
            ItemBody::Mcq { options, gold_index } => {
                if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&options.len()) {
                    return Err(RecordErrorKind::OptionCount(options.len()));
                }
                if *gold_index >= options.len() {
                    return Err(RecordErrorKind::GoldIndexOutOfRange {
                        gold_index: *gold_index as i64,
                        options: options.len(),
                    });
                }
            }
            ItemBody::Math { gold_answer } => {
                if gold_answer.trim().is_empty() {
                    return Err(RecordErrorKind::EmptyGoldAnswer);
                }
            }
        }
        Ok(())
    }
}

/// Wire shape of one dataset line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_index: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_answer: Option<String>,
    category: String,
}

impl From<&Item> for RawRecord {
    fn from(item: &Item) -> Self {
        let (options, gold_index, gold_answer) = match &item.body {
            ItemBody::Mcq { options, gold_index } => (Some(options.clone()), Some(*gold_index as i64), None),
            ItemBody::Math { gold_answer } => (None, None, Some(gold_answer.clone())),
        };
        RawRecord {
            id: item.id.clone(),
            question: item.question.clone(),
            options,
            gold_index,
            gold_answer,
            category: item.category.clone(),
        }
    }
}

impl RawRecord {
    fn into_item(self, family: DatasetFamily) -> Result<Item, RecordErrorKind> {
        let body = match (self.options, self.gold_index, self.gold_answer) {
            (Some(options), Some(gold_index), None) => {
                if family.item_kind() != ItemKind::Mcq {
                    return Err(RecordErrorKind::KindMismatch { family, found: ItemKind::Mcq });
                }
                if gold_index < 0 || gold_index as usize >= options.len() {
                    return Err(RecordErrorKind::GoldIndexOutOfRange { gold_index, options: options.len() });
                }
                ItemBody::Mcq { options, gold_index: gold_index as usize }
            }
            (None, None, Some(gold_answer)) => {
                if family.item_kind() != ItemKind::FreeformMath {
                    return Err(RecordErrorKind::KindMismatch { family, found: ItemKind::FreeformMath });
                }
                ItemBody::Math { gold_answer }
            }
            (Some(_), None, _) => return Err(RecordErrorKind::Malformed("missing `gold_index`".into())),
            (None, Some(_), _) => return Err(RecordErrorKind::Malformed("missing `options`".into())),
            (None, None, None) => {
                return Err(RecordErrorKind::Malformed("record has neither `options` nor `gold_answer`".into()))
            }
            _ => {
                return Err(RecordErrorKind::Malformed(
                    "record mixes multiple-choice and free-form answer fields".into(),
                ))
            }
        };
        let item = Item { id: self.id, question: self.question, body, category: self.category };
        item.validate()?;
        Ok(item)
    }
}

/// Validated, single-kind list of items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSet {
    pub family: DatasetFamily,
    pub items: Vec<Item>,
}

impl ItemSet {
    /// Builds a set from in-memory items, enforcing the same invariants as
    /// [`load_dataset`].
    pub fn new(family: DatasetFamily, items: Vec<Item>) -> Result<Self, DatasetError> {
        let mut errors = Vec::new();
        for (idx, item) in items.iter().enumerate() {
            let kind_error = (item.kind() != family.item_kind())
                .then(|| RecordErrorKind::KindMismatch { family, found: item.kind() });
            if let Some(kind) = kind_error.or_else(|| item.validate().err()) {
                errors.push(RecordError { line: idx + 1, id: Some(item.id.clone()), kind });
            }
        }
        errors.extend(duplicate_errors(items.iter().enumerate().map(|(i, it)| (i + 1, it.id.as_str()))));
        if !errors.is_empty() {
            errors.sort_by_key(|e| e.line);
            return Err(DatasetError::Invalid(errors));
        }
        Ok(Self { family, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|item| item.id == id)
    }

    /// Canonical JSON Lines serialization; loading it back yields the same set.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(&RawRecord::from(item)).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Content hash of the canonical serialization (hex SHA-256).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.family.as_str().as_bytes());
        hasher.update(b"\n");
        hasher.update(self.to_jsonl().as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Smallest option count across multiple-choice items.
    pub fn min_option_count(&self) -> Option<usize> {
        self.items.iter().filter_map(|i| i.options().map(<[String]>::len)).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordErrorKind {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("gold_index out of range ({gold_index} with {options} options)")]
    GoldIndexOutOfRange { gold_index: i64, options: usize },
    #[error("option count {0} outside 2..=10")]
    OptionCount(usize),
    #[error("empty question")]
    EmptyQuestion,
    #[error("empty id")]
    EmptyId,
    #[error("empty gold_answer")]
    EmptyGoldAnswer,
    #[error("{found:?} record in a {family} dataset")]
    KindMismatch { family: DatasetFamily, found: ItemKind },
}

/// A rejected dataset line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct RecordError {
    pub line: usize,
    pub id: Option<String>,
    pub kind: RecordErrorKind,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{} invalid record(s); first: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    Invalid(Vec<RecordError>),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip bad lines instead of aborting.
    pub lenient: bool,
}

/// Result of a successful load.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub set: ItemSet,
    /// Lines rejected in lenient mode.
    pub skipped: Vec<RecordError>,
    pub warnings: Vec<String>,
}

pub fn load_dataset(path: &Path, family: DatasetFamily, opts: LoadOptions) -> Result<Loaded, DatasetError> {
    let text =
        fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset(&text, family, opts)
}

/// Parses JSON Lines text into an [`ItemSet`]. Blank lines are ignored.
pub fn parse_dataset(text: &str, family: DatasetFamily, opts: LoadOptions) -> Result<Loaded, DatasetError> {
    let mut parsed: Vec<(usize, Item)> = Vec::new();
    let mut errors: Vec<RecordError> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(line) {
            Ok(raw) => raw,
            Err(e) => {
                errors.push(RecordError { line: line_no, id: None, kind: RecordErrorKind::Malformed(e.to_string()) });
                continue;
            }
        };
        let id = raw.id.clone();
        match raw.into_item(family) {
            Ok(item) => parsed.push((line_no, item)),
            Err(kind) => errors.push(RecordError { line: line_no, id: Some(id), kind }),
        }
    }

    // Every occurrence of a repeated id is rejected, so the outcome does not
    // depend on line order.
    let dups = duplicate_errors(parsed.iter().map(|(line, item)| (*line, item.id.as_str())));
    let dup_lines: Vec<usize> = dups.iter().map(|e| e.line).collect();
    parsed.retain(|(line, _)| !dup_lines.contains(line));
    errors.extend(dups);
    errors.sort_by_key(|e| e.line);

    if !errors.is_empty() && !opts.lenient {
        return Err(DatasetError::Invalid(errors));
    }

    let mut warnings = Vec::new();
    if parsed.is_empty() {
        warnings.push("dataset contains no items".to_string());
    }
    if !errors.is_empty() {
        warnings.push(format!("skipped {} invalid line(s)", errors.len()));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(Loaded {
        set: ItemSet { family, items: parsed.into_iter().map(|(_, item)| item).collect() },
        skipped: errors,
        warnings,
    })
}

fn duplicate_errors<'a>(ids: impl Iterator<Item = (usize, &'a str)>) -> Vec<RecordError> {
    let mut seen: HashMap<&str, Vec<usize>> = HashMap::new();
    for (line, id) in ids {
        seen.entry(id).or_default().push(line);
    }
    let mut out = Vec::new();
    for (id, lines) in seen {
        if lines.len() > 1 {
            for line in lines {
                out.push(RecordError {
                    line,
                    id: Some(id.to_string()),
                    kind: RecordErrorKind::DuplicateId(id.to_string()),
                });
            }
        }
    }
    out
}

/// Per-category item counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

pub fn dataset_stats(set: &ItemSet) -> CategoryStats {
    let mut counts = BTreeMap::new();
    for item in &set.items {
        *counts.entry(item.category.clone()).or_insert(0) += 1;
    }
    CategoryStats { counts, total: set.items.len() }
}

impl fmt::Display for CategoryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.counts.keys().map(String::len).max().unwrap_or(0).max("TOTAL".len());
        for (category, count) in &self.counts {
            writeln!(f, "{category:<width$}  {count}")?;
        }
        write!(f, "{:<width$}  {}", "TOTAL", self.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mcq_line(id: &str, gold: i64, n: usize, cat: &str) -> String {
        let options: Vec<String> = (0..n).map(|i| format!("opt{i}")).collect();
        serde_json::json!({"id": id, "question": format!("Question {id}?"), "options": options, "gold_index": gold, "category": cat})
            .to_string()
    }

    #[test]
    fn gold_index_at_option_count_is_rejected() {
        let text = mcq_line("a", 10, 10, "x");
        let err = parse_dataset(&text, DatasetFamily::MmluPro, LoadOptions::default()).unwrap_err();
        let DatasetError::Invalid(errors) = err else { panic!("expected record errors") };
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].line, 1);
        assert!(errors[0].to_string().contains("gold_index out of range"), "{}", errors[0]);
    }

    #[test]
    fn empty_file_yields_empty_set_with_warning() {
        let loaded = parse_dataset("", DatasetFamily::AgiEval, LoadOptions::default()).unwrap();
        assert!(loaded.set.is_empty());
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn duplicates_rejected_on_every_occurrence() {
        let text = [mcq_line("a", 0, 4, "x"), mcq_line("b", 1, 4, "x"), mcq_line("a", 2, 4, "y")].join("\n");
        let err = parse_dataset(&text, DatasetFamily::AgiEval, LoadOptions::default()).unwrap_err();
        let DatasetError::Invalid(errors) = err else { panic!() };
        assert_eq!(errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![1, 3]);

        let loaded = parse_dataset(&text, DatasetFamily::AgiEval, LoadOptions { lenient: true }).unwrap();
        assert_eq!(loaded.set.len(), 1);
        assert_eq!(loaded.skipped.len(), 2);
    }

    #[test]
    fn lenient_mode_counts_bad_lines() {
        let text = [
            mcq_line("a", 0, 4, "x"),
            "{not json".to_string(),
            serde_json::json!({"id": "c", "question": "  ", "options": ["p", "q"], "gold_index": 0, "category": "x"})
                .to_string(),
            mcq_line("d", 0, 1, "x"),
        ]
        .join("\n");
        let loaded = parse_dataset(&text, DatasetFamily::MmluPro, LoadOptions { lenient: true }).unwrap();
        assert_eq!(loaded.set.len(), 1);
        let kinds: Vec<_> = loaded.skipped.iter().map(|e| (e.line, e.kind.clone())).collect();
        assert!(matches!(kinds[0], (2, RecordErrorKind::Malformed(_))));
        assert_eq!(kinds[1], (3, RecordErrorKind::EmptyQuestion));
        assert_eq!(kinds[2], (4, RecordErrorKind::OptionCount(1)));
    }

    #[test]
    fn math_record_in_mcq_family_is_a_kind_mismatch() {
        let text = r#"{"id":"m","question":"1+1?","gold_answer":"2","category":"Level 1"}"#;
        let err = parse_dataset(text, DatasetFamily::AgiEval, LoadOptions::default()).unwrap_err();
        let DatasetError::Invalid(errors) = err else { panic!() };
        assert!(matches!(errors[0].kind, RecordErrorKind::KindMismatch { .. }));
        assert!(parse_dataset(text, DatasetFamily::Math, LoadOptions::default()).is_ok());
    }

    #[test]
    fn stats_of_synthetic_set() {
        let items = (0..3).map(|i| Item::math(format!("m{i}"), "q", "1", "x")).collect();
        let set = ItemSet::new(DatasetFamily::Math, items).unwrap();
        let stats = dataset_stats(&set);
        assert_eq!(stats.counts.get("x"), Some(&3));
        assert_eq!(stats.total, 3);
        assert_eq!(stats.to_string(), "x      3\nTOTAL  3");
    }

    #[test]
    fn family_parsing() {
        assert_eq!("MMLU-Pro".parse::<DatasetFamily>().unwrap(), DatasetFamily::MmluPro);
        assert_eq!("agieval".parse::<DatasetFamily>().unwrap(), DatasetFamily::AgiEval);
        assert!("gsm8k".parse::<DatasetFamily>().is_err());
    }
}
