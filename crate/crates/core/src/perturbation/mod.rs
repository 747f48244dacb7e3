//! Variant spaces for the three robustness tasks: prompt rewording,
//! answer-choice reordering and sampling-seed variation.

mod catalog;
mod plan;

pub use catalog::{
    load_prompt_catalog, load_prompt_catalog_from, option_letter, parse_catalog, question_block, render_prompt,
    CatalogError, PromptCatalog, PromptTemplate, RenderError, CATALOG_SIZE, QUESTION_PLACEHOLDER,
};
pub use plan::{build_run_plan, PlanError, RunConfig, RunPlan, ShortItemPolicy, DEFAULT_MAX_TOKENS, DEFAULT_SEEDS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Item, ItemBody};

/// Sampling temperature for the non-greedy task; the other tasks decode greedily.
pub const NON_GREEDY_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "prompt")]
    PromptRobustness,
    #[serde(rename = "choice")]
    ChoiceOrder,
    #[serde(rename = "nongreedy")]
    NonGreedy,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PromptRobustness, Task::ChoiceOrder, Task::NonGreedy];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::PromptRobustness => "prompt",
            Task::ChoiceOrder => "choice",
            Task::NonGreedy => "nongreedy",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Task::PromptRobustness => "Prompt Robustness",
            Task::ChoiceOrder => "Choice Order Robustness",
            Task::NonGreedy => "Non-Greedy Inference",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prompt" => Ok(Task::PromptRobustness),
            "choice" => Ok(Task::ChoiceOrder),
            "nongreedy" | "non-greedy" => Ok(Task::NonGreedy),
            other => Err(format!("unknown task `{other}` (expected prompt, choice or nongreedy)")),
        }
    }
}

/// The value that distinguishes one variant from its siblings within a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum VariantKey {
    Prompt(u32),
    Position(usize),
    Seed(u64),
}

impl fmt::Display for VariantKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantKey::Prompt(id) => write!(f, "prompt:{id}"),
            VariantKey::Position(p) => write!(f, "position:{p}"),
            VariantKey::Seed(s) => write!(f, "seed:{s}"),
        }
    }
}

/// One perturbation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub task: Task,
    pub prompt_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub temperature: f64,
}

impl Variant {
    pub fn prompt(prompt_id: u32) -> Self {
        Self { task: Task::PromptRobustness, prompt_id, gold_position: None, seed: None, temperature: 0.0 }
    }

    pub fn choice(fixed_prompt: u32, gold_position: usize) -> Self {
        Self {
            task: Task::ChoiceOrder,
            prompt_id: fixed_prompt,
            gold_position: Some(gold_position),
            seed: None,
            temperature: 0.0,
        }
    }

    pub fn non_greedy(fixed_prompt: u32, seed: u64) -> Self {
        Self {
            task: Task::NonGreedy,
            prompt_id: fixed_prompt,
            gold_position: None,
            seed: Some(seed),
            temperature: NON_GREEDY_TEMPERATURE,
        }
    }

    pub fn key(&self) -> VariantKey {
        match self.task {
            Task::PromptRobustness => VariantKey::Prompt(self.prompt_id),
            Task::ChoiceOrder => VariantKey::Position(self.gold_position.expect("choice variant has a position")),
            Task::NonGreedy => VariantKey::Seed(self.seed.expect("non-greedy variant has a seed")),
        }
    }

    /// Stable textual identity, e.g. `prompt:3` or `nongreedy:seed:101`.
    pub fn label(&self) -> String {
        match self.task {
            Task::PromptRobustness => self.key().to_string(),
            _ => format!("{}:{}", self.task, self.key()),
        }
    }

    /// Gold slot for an item with `n_options` options. Positions past the end
    /// wrap around so every item gets one generation per variant.
    pub fn effective_position(&self, n_options: usize) -> Option<usize> {
        self.gold_position.map(|p| p % n_options)
    }

    /// The item as it is shown to the model under this variant.
    pub fn apply(&self, item: &Item) -> Result<Item, PerturbError> {
        match (self.task, &item.body) {
            (Task::ChoiceOrder, ItemBody::Mcq { options, .. }) => {
                let pos = self.effective_position(options.len()).expect("choice variant has a position");
                choice_order_variant(item, pos)
            }
            (Task::ChoiceOrder, ItemBody::Math { .. }) => Err(PerturbError::NotMultipleChoice(item.id.clone())),
            _ => Ok(item.clone()),
        }
    }

    /// Maps an option index as displayed under this variant back to the
    /// index in the original item.
    pub fn original_option_index(&self, item: &Item, shown: usize) -> usize {
        match (self.task, &item.body) {
            (Task::ChoiceOrder, ItemBody::Mcq { options, gold_index }) => {
                let pos = self.effective_position(options.len()).unwrap_or(*gold_index);
                if shown == pos {
                    *gold_index
                } else if shown == *gold_index {
                    pos
                } else {
                    shown
                }
            }
            _ => shown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("item `{0}` is not multiple-choice")]
    NotMultipleChoice(String),
    #[error("gold position {position} out of range for item `{id}` with {options} options")]
    PositionOutOfRange { id: String, position: usize, options: usize },
}

/// Moves the gold option to `gold_position` by swapping it with the option
/// currently there. Every other option keeps its slot.
pub fn choice_order_variant(item: &Item, gold_position: usize) -> Result<Item, PerturbError> {
    let ItemBody::Mcq { options, gold_index } = &item.body else {
        return Err(PerturbError::NotMultipleChoice(item.id.clone()));
    };
    if gold_position >= options.len() {
        return Err(PerturbError::PositionOutOfRange {
            id: item.id.clone(),
            position: gold_position,
            options: options.len(),
        });
    }
    let mut options = options.clone();
    options.swap(*gold_index, gold_position);
    Ok(Item {
        id: item.id.clone(),
        question: item.question.clone(),
        body: ItemBody::Mcq { options, gold_index: gold_position },
        category: item.category.clone(),
    })
}
