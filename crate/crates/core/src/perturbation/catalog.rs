//! Prompt catalogs and prompt rendering.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetFamily, Item, ItemBody};

pub const QUESTION_PLACEHOLDER: &str = "{QUESTION}";
/// Subject placeholder used by some MMLU-Pro templates.
pub const TASK_PLACEHOLDER: &str = "{task}";
pub const CATALOG_SIZE: usize = 10;

const MMLU_PRO_CATALOG: &str = include_str!("../../catalogs/mmlu-pro.jsonl");
const AGIEVAL_CATALOG: &str = include_str!("../../catalogs/agieval.jsonl");
const MATH_CATALOG: &str = include_str!("../../catalogs/math.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub prompt_id: u32,
    pub template: String,
    /// The one template used by the choice-order and non-greedy tasks.
    pub is_fixed: bool,
    pub is_cot: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptCatalog {
    pub family: DatasetFamily,
    pub templates: Vec<PromptTemplate>,
}

impl PromptCatalog {
    pub fn fixed(&self) -> &PromptTemplate {
        self.templates.iter().find(|t| t.is_fixed).expect("validated catalog has a fixed template")
    }

    pub fn get(&self, prompt_id: u32) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.prompt_id == prompt_id)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read prompt catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("catalog has {0} templates, expected {CATALOG_SIZE}")]
    WrongSize(usize),
    #[error("catalog must mark exactly one fixed template, found {0}")]
    FixedMarkers(usize),
    #[error("template {prompt_id} has {count} `{{QUESTION}}` placeholders, expected 1")]
    Placeholder { prompt_id: u32, count: usize },
    #[error("template ids must be 0..{CATALOG_SIZE} without gaps, found {0:?}")]
    Ids(Vec<u32>),
}

/// The shipped catalog for `family`.
pub fn load_prompt_catalog(family: DatasetFamily) -> Result<PromptCatalog, CatalogError> {
    let text = match family {
        DatasetFamily::MmluPro => MMLU_PRO_CATALOG,
        DatasetFamily::AgiEval => AGIEVAL_CATALOG,
        DatasetFamily::Math => MATH_CATALOG,
    };
    parse_catalog(text, family)
}

/// Loads `<dir>/<family>.jsonl`, e.g. `prompts/mmlu-pro.jsonl`.
pub fn load_prompt_catalog_from(dir: &Path, family: DatasetFamily) -> Result<PromptCatalog, CatalogError> {
    let path = dir.join(format!("{}.jsonl", family.as_str()));
    let text =
        fs::read_to_string(&path).map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
    parse_catalog(&text, family)
}

pub fn parse_catalog(text: &str, family: DatasetFamily) -> Result<PromptCatalog, CatalogError> {
    let mut templates = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let template: PromptTemplate = serde_json::from_str(line)
            .map_err(|e| CatalogError::Malformed { line: idx + 1, message: e.to_string() })?;
        templates.push(template);
    }
    templates.sort_by_key(|t| t.prompt_id);
    validate_templates(&templates)?;
    Ok(PromptCatalog { family, templates })
}

fn validate_templates(templates: &[PromptTemplate]) -> Result<(), CatalogError> {
    for t in templates {
        let count = t.template.matches(QUESTION_PLACEHOLDER).count();
        if count != 1 {
            return Err(CatalogError::Placeholder { prompt_id: t.prompt_id, count });
        }
    }
    let fixed = templates.iter().filter(|t| t.is_fixed).count();
    if fixed != 1 {
        return Err(CatalogError::FixedMarkers(fixed));
    }
    if templates.len() != CATALOG_SIZE {
        return Err(CatalogError::WrongSize(templates.len()));
    }
    let ids: Vec<u32> = templates.iter().map(|t| t.prompt_id).collect();
    if ids.iter().enumerate().any(|(i, &id)| id as usize != i) {
        return Err(CatalogError::Ids(ids));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("template {0} has no `{{QUESTION}}` placeholder")]
    MissingPlaceholder(u32),
    #[error("item `{id}` has {options} options but {family} prompts only letter A..{last}")]
    TooManyOptions { id: String, options: usize, family: DatasetFamily, last: char },
    #[error("item `{id}` does not match the {family} family")]
    KindMismatch { id: String, family: DatasetFamily },
}

pub fn option_letter(index: usize) -> char {
    debug_assert!(index < 26);
    (b'A' + index as u8) as char
}

/// Question text plus, for multiple-choice items, one `<LETTER>. <option>`
/// line per option in current order.
pub fn question_block(item: &Item) -> String {
    match &item.body {
        ItemBody::Mcq { options, .. } => {
            let mut block = item.question.clone();
            for (i, option) in options.iter().enumerate() {
                block.push('\n');
                block.push(option_letter(i));
                block.push_str(". ");
                block.push_str(option);
            }
            block
        }
        ItemBody::Math { .. } => item.question.clone(),
    }
}

/// Substitutes the item into the template.
pub fn render_prompt(template: &PromptTemplate, item: &Item, family: DatasetFamily) -> Result<String, RenderError> {
    if item.kind() != family.item_kind() {
        return Err(RenderError::KindMismatch { id: item.id.clone(), family });
    }
    if let (Some(options), Some(range)) = (item.options(), family.letter_range()) {
        if options.len() > range {
            return Err(RenderError::TooManyOptions {
                id: item.id.clone(),
                options: options.len(),
                family,
                last: option_letter(range - 1),
            });
        }
    }
    let Some(at) = template.template.find(QUESTION_PLACEHOLDER) else {
        return Err(RenderError::MissingPlaceholder(template.prompt_id));
    };
    // Split first so a question that itself contains `{task}` is left alone.
    let (head, tail) = template.template.split_at(at);
    let tail = &tail[QUESTION_PLACEHOLDER.len()..];
    let subject = item.category.to_lowercase();
    let mut out = head.replace(TASK_PLACEHOLDER, &subject);
    out.push_str(&question_block(item));
    out.push_str(&tail.replace(TASK_PLACEHOLDER, &subject));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(text: &str) -> PromptTemplate {
        PromptTemplate { prompt_id: 0, template: text.into(), is_fixed: true, is_cot: false }
    }

    fn item(options: &[&str]) -> Item {
        Item::mcq("i", "Q?", options.iter().map(|s| s.to_string()).collect(), 0, "Law")
    }

    #[test]
    fn shipped_catalogs_are_valid() {
        for family in DatasetFamily::ALL {
            let catalog = load_prompt_catalog(family).unwrap();
            assert_eq!(catalog.len(), 10);
            assert_eq!(catalog.templates.iter().filter(|t| t.is_cot).count(), 4);
        }
    }

    #[test]
    fn fixed_templates() {
        let math = load_prompt_catalog(DatasetFamily::Math).unwrap();
        assert!(math.fixed().template.starts_with("Calculate the answer to this math problem"));
        assert_eq!(math.fixed().prompt_id, 5);

        let mmlu = load_prompt_catalog(DatasetFamily::MmluPro).unwrap();
        assert!(mmlu.fixed().template.starts_with("For the multiple-choice question related to {task}"));
        assert!(mmlu.templates.iter().any(|t| t.template.contains("You must reply with only a single letter")));
        assert_eq!(mmlu.templates[2].template.lines().next().unwrap(),
            "You must reply with only a single letter from A, B, C, D, E, F, G, H, I or J to this question. Conclude with:");

        let agi = load_prompt_catalog(DatasetFamily::AgiEval).unwrap();
        assert!(agi.fixed().template.starts_with("Evaluate the multiple-choice question"));
    }

    #[test]
    fn two_fixed_markers_rejected() {
        let mut text = String::new();
        for i in 0..10 {
            let t = PromptTemplate { prompt_id: i, template: "{QUESTION}".into(), is_fixed: i < 2, is_cot: false };
            text.push_str(&serde_json::to_string(&t).unwrap());
            text.push('\n');
        }
        assert!(matches!(parse_catalog(&text, DatasetFamily::Math), Err(CatalogError::FixedMarkers(2))));
    }

    #[test]
    fn double_placeholder_rejected() {
        let t =
            PromptTemplate { prompt_id: 0, template: "{QUESTION} {QUESTION}".into(), is_fixed: true, is_cot: false };
        let text = serde_json::to_string(&t).unwrap();
        assert!(matches!(
            parse_catalog(&text, DatasetFamily::Math),
            Err(CatalogError::Placeholder { prompt_id: 0, count: 2 })
        ));
    }

    #[test]
    fn renders_lettered_options() {
        let out =
            render_prompt(&template("Answer this.\n{QUESTION}"), &item(&["p", "q"]), DatasetFamily::MmluPro).unwrap();
        assert_eq!(out, "Answer this.\nQ?\nA. p\nB. q");
        let swapped = render_prompt(&template("{QUESTION}"), &item(&["q", "p"]), DatasetFamily::MmluPro).unwrap();
        assert!(swapped.contains("A. q\nB. p"));
    }

    #[test]
    fn letter_range_enforced() {
        let eleven: Vec<String> = (0..11).map(|i| i.to_string()).collect();
        let mut it = item(&["a", "b"]);
        it.body = ItemBody::Mcq { options: eleven, gold_index: 0 };
        assert!(matches!(
            render_prompt(&template("{QUESTION}"), &it, DatasetFamily::MmluPro),
            Err(RenderError::TooManyOptions { last: 'J', .. })
        ));
        let six = item(&["a", "b", "c", "d", "e", "f"]);
        assert!(render_prompt(&template("{QUESTION}"), &six, DatasetFamily::AgiEval).is_err());
        assert!(render_prompt(&template("{QUESTION}"), &six, DatasetFamily::MmluPro).is_ok());
    }

    #[test]
    fn task_placeholder_filled_with_lowercase_category() {
        let out =
            render_prompt(&template("About {task}: {QUESTION}"), &item(&["a", "b"]), DatasetFamily::MmluPro).unwrap();
        assert!(out.starts_with("About law: Q?"));
    }

    #[test]
    fn math_prompt_has_no_option_lines() {
        let catalog = load_prompt_catalog(DatasetFamily::Math).unwrap();
        let it = Item::math("m", "What is 1+1?", "2", "Level 1");
        let out = render_prompt(catalog.fixed(), &it, DatasetFamily::Math).unwrap();
        assert!(out.contains("Problem: What is 1+1?\n"));
        assert!(out.contains("$\\boxed{answer}$"));
    }

    #[test]
    fn missing_placeholder() {
        assert_eq!(
            render_prompt(&template("nothing here"), &item(&["a", "b"]), DatasetFamily::MmluPro),
            Err(RenderError::MissingPlaceholder(0))
        );
    }
}
