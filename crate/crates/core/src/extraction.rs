//! Final-answer extraction from raw generations.
//!
//! Two strict contracts and nothing else: multiple-choice answers must follow
//! the phrase `best answer is`, math answers must sit inside `\boxed{...}`.
//! In both cases the last occurrence in the text wins. Text that does not
//! follow the contract is a failed extraction, never repaired.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::MAX_OPTIONS;

const MCQ_TRIGGER: &str = "best answer is";
const BOXED_TRIGGER: &str = "\\boxed{";
/// Characters allowed between the trigger phrase and the letter.
const MCQ_WRAPPERS: [char; 7] = ['(', '[', '*', '_', '$', '"', '\''];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionStatus {
    Extracted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub status: ExtractionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    /// Character offsets `[start, end)` of the matched region in the raw text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_span: Option<(usize, usize)>,
}

impl Prediction {
    pub fn extracted(value: impl Into<String>, span: (usize, usize)) -> Self {
        Self { status: ExtractionStatus::Extracted, value: Some(value.into()), source_span: Some(span) }
    }

    pub fn failed() -> Self {
        Self { status: ExtractionStatus::Failed, value: None, source_span: None }
    }

    pub fn is_extracted(&self) -> bool {
        self.status == ExtractionStatus::Extracted
    }

    pub fn value(&self) -> Option<&str> {
        self.value.as_deref()
    }

    /// Zero-based option index for an extracted letter.
    pub fn letter_index(&self) -> Option<usize> {
        let letter = self.value()?.chars().next()?;
        letter.is_ascii_uppercase().then(|| (letter as u8 - b'A') as usize)
    }
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Reads the option letter after the last `best answer is` (ASCII
/// case-insensitive). Whitespace and the wrappers `( [ * _ $ " '` may precede
/// the letter; the letter must be followed by a non-alphanumeric character or
/// end of text, and must lie within `A..A+n_options`.
pub fn extract_mcq_answer(raw_text: &str, n_options: usize) -> Prediction {
    debug_assert!((2..=MAX_OPTIONS).contains(&n_options));
    // ASCII lowercasing keeps byte offsets aligned with the original.
    let lowered = raw_text.to_ascii_lowercase();
    let Some(start) = lowered.rfind(MCQ_TRIGGER) else {
        return Prediction::failed();
    };
    let after = start + MCQ_TRIGGER.len();
    let mut chars = raw_text[after..].char_indices().skip_while(|(_, c)| c.is_whitespace() || MCQ_WRAPPERS.contains(c));
    let Some((rel, letter)) = chars.next() else {
        return Prediction::failed();
    };
    if !letter.is_ascii_alphabetic() {
        return Prediction::failed();
    }
    if chars.next().is_some_and(|(_, c)| c.is_alphanumeric()) {
        return Prediction::failed();
    }
    let letter = letter.to_ascii_uppercase();
    if (letter as u8 - b'A') as usize >= n_options {
        return Prediction::failed();
    }
    let end = after + rel + 1;
    Prediction::extracted(letter.to_string(), (char_offset(raw_text, start), char_offset(raw_text, end)))
}

/// Content of the last `\boxed{...}`, scanned with brace balancing so nested
/// groups such as `\boxed{\frac{1}{2}}` come back whole. A backslash escapes
/// the following character, so `\{` and `\}` do not count as braces.
/// Unterminated or empty boxes are failures.
pub fn extract_boxed_answer(raw_text: &str) -> Prediction {
    let Some(start) = raw_text.rfind(BOXED_TRIGGER) else {
        return Prediction::failed();
    };
    let content_start = start + BOXED_TRIGGER.len();
    let mut depth = 1usize;
    let mut iter = raw_text[content_start..].char_indices();
    while let Some((i, c)) = iter.next() {
        match c {
            '\\' => {
                iter.next();
            }
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let content = raw_text[content_start..content_start + i].trim();
                    if content.is_empty() {
                        return Prediction::failed();
                    }
                    let end = content_start + i + 1;
                    return Prediction::extracted(content, (char_offset(raw_text, start), char_offset(raw_text, end)));
                }
            }
            _ => {}
        }
    }
    Prediction::failed()
}

/// Which extraction contract a fixture exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    Mcq,
    Boxed,
}

/// One `(raw_text, expected prediction)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionFixture {
    #[serde(default)]
    pub name: String,
    pub kind: FixtureKind,
    pub raw_text: String,
    #[serde(default)]
    pub n_options: Option<usize>,
    pub expected: Prediction,
}

impl ExtractionFixture {
    pub fn run(&self) -> Prediction {
        match self.kind {
            FixtureKind::Mcq => extract_mcq_answer(&self.raw_text, self.n_options.unwrap_or(MAX_OPTIONS)),
            FixtureKind::Boxed => extract_boxed_answer(&self.raw_text),
        }
    }

    /// Spans are compared only when the fixture records one.
    pub fn matches(&self, actual: &Prediction) -> bool {
        actual.status == self.expected.status
            && actual.value == self.expected.value
            && (self.expected.source_span.is_none() || actual.source_span == self.expected.source_span)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureMismatch {
    pub line: usize,
    pub name: String,
    pub expected: Prediction,
    pub actual: Prediction,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureReport {
    pub total: usize,
    pub mismatches: Vec<FixtureMismatch>,
}

#[derive(Debug, Error)]
#[error("fixture line {line}: {message}")]
pub struct FixtureError {
    pub line: usize,
    pub message: String,
}

/// Replays a JSON Lines fixture corpus.
pub fn replay_fixtures(text: &str) -> Result<FixtureReport, FixtureError> {
    let mut total = 0;
    let mut mismatches = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fixture: ExtractionFixture =
            serde_json::from_str(line).map_err(|e| FixtureError { line: idx + 1, message: e.to_string() })?;
        total += 1;
        let actual = fixture.run();
        if !fixture.matches(&actual) {
            mismatches.push(FixtureMismatch {
                line: idx + 1,
                name: fixture.name.clone(),
                expected: fixture.expected.clone(),
                actual,
            });
        }
    }
    Ok(FixtureReport { total, mismatches })
}
