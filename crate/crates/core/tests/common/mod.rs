#![allow(dead_code)]

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use score::dataset::{DatasetFamily, Item, ItemSet};
use score::inference::{read_store, GenerationRecord, MockBackend, RetryPolicy};
use score::metrics::{Answer, PredictionMatrix};
use score::orchestrator::{execute_run, RunOutcome, RunRequest};

pub const MATH_ANSWERS: [&str; 5] = ["1", "\\frac{1}{2}", "x+1", "2\\sqrt{2}", "(0, 1)"];

/// Synthetic items: MCQ families get `n_options` options with the gold
/// rotating through them; math items cycle through [`MATH_ANSWERS`].
pub fn synthetic_items(family: DatasetFamily, n: usize) -> ItemSet {
    let n_options = match family {
        DatasetFamily::MmluPro => 10,
        DatasetFamily::AgiEval => 4,
        DatasetFamily::Math => 0,
    };
    let categories = ["history", "physics", "law"];
    let items = (0..n)
        .map(|i| {
            let category = categories[i % categories.len()];
            if n_options == 0 {
                Item::math(format!("m{i}"), format!("Simplify expression number {i}."), MATH_ANSWERS[i % 5], category)
            } else {
                let options = (0..n_options).map(|j| format!("choice {j} of item {i}")).collect();
                Item::mcq(format!("q{i}"), format!("Which statement {i} holds?"), options, i % n_options, category)
            }
        })
        .collect();
    ItemSet::new(family, items).expect("synthetic items are valid")
}

pub fn write_dataset(dir: &Path, family: DatasetFamily, n: usize) -> PathBuf {
    let path = dir.join(format!("{}.jsonl", family.as_str()));
    std::fs::write(&path, synthetic_items(family, n).to_jsonl()).unwrap();
    path
}

pub fn mock_request(dataset: &Path, family: DatasetFamily, out: &Path) -> RunRequest {
    let mut request = RunRequest::new(dataset, family, "mock-model", out);
    request.retry = RetryPolicy::no_delay(2);
    request.concurrency = 4;
    request
}

pub fn mock_run(dataset: &Path, family: DatasetFamily, out: &Path) -> RunOutcome {
    execute_run(&mock_request(dataset, family, out), &MockBackend::default()).expect("mock run succeeds")
}

/// Records with their timestamps cleared.
pub fn untimed(path: &Path) -> Vec<GenerationRecord> {
    read_store(path)
        .unwrap()
        .records
        .into_iter()
        .map(|mut r| {
            r.timestamp = 0;
            r
        })
        .collect()
}

pub fn duplicate_keys(records: &[GenerationRecord]) -> usize {
    let mut seen = HashSet::new();
    records.iter().filter(|r| !seen.insert(r.resume_key())).count()
}

/// Equivalence class of a math answer drawn from a fixed pool whose
/// classes are known by construction.
pub fn math_class(answer: &str) -> usize {
    const POOL: [&[&str]; 5] = [
        &["\\frac{1}{2}", "0.5", "1/2"],
        &["2", "2.0", "\\frac{4}{2}"],
        &["x+1", "1+x"],
        &["\\sqrt{8}", "2\\sqrt{2}"],
        &["(0, 1)", "(0,1)"],
    ];
    POOL.iter().position(|class| class.contains(&answer)).expect("answer from the pool")
}

pub const MATH_POOL: [&str; 12] = [
    "\\frac{1}{2}",
    "0.5",
    "1/2",
    "2",
    "2.0",
    "\\frac{4}{2}",
    "x+1",
    "1+x",
    "\\sqrt{8}",
    "2\\sqrt{2}",
    "(0, 1)",
    "(0,1)",
];

/// Consistency rate by direct enumeration of every unordered pair.
pub fn brute_force_cr(matrix: &PredictionMatrix, failed_pairs_similar: bool) -> f64 {
    let mut sum = 0.0;
    for set in &matrix.sets {
        let classes: Vec<Option<usize>> = set
            .predictions
            .iter()
            .map(|p| match &p.answer {
                None => None,
                Some(Answer::Option(i)) => Some(*i),
                Some(Answer::Math(s)) => Some(math_class(s)),
            })
            .collect();
        let n = classes.len();
        let mut pairs = 0u64;
        let mut agree = 0u64;
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    pairs += 1;
                    let same = match (classes[i], classes[j]) {
                        (Some(a), Some(b)) => a == b,
                        (None, None) => failed_pairs_similar,
                        _ => false,
                    };
                    if same {
                        agree += 1;
                    }
                }
            }
        }
        sum += agree as f64 / pairs as f64;
    }
    100.0 * sum / matrix.sets.len() as f64
}
