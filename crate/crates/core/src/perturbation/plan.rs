use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{render_prompt, PromptCatalog, PromptTemplate, RenderError, Task, Variant};
use crate::dataset::{DatasetFamily, Item, ItemSet};

pub const DEFAULT_SEEDS: [u64; 5] = [101, 102, 103, 104, 105];
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

/// What to do with items that have fewer options than the number of
/// choice-order positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortItemPolicy {
    /// Use `position mod option_count`.
    #[default]
    Wrap,
    /// Refuse to build the plan.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub tasks: Vec<Task>,
    pub seeds: Vec<u64>,
    /// Choice-order position count; `None` uses the family default.
    pub positions: Option<usize>,
    pub max_tokens: u32,
    pub short_items: ShortItemPolicy,
    pub system_prompt: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            positions: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            short_items: ShortItemPolicy::default(),
            system_prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("catalog is for {catalog}, dataset is {dataset}")]
    FamilyMismatch { catalog: DatasetFamily, dataset: DatasetFamily },
    #[error("{positions} choice-order positions exceed the {family} letter range")]
    PositionsExceedLetters { positions: usize, family: DatasetFamily },
    #[error("{positions} choice-order positions exceed the option count of {} item(s): {}", .items.len(), .items.join(", "))]
    ShortItems { positions: usize, items: Vec<String> },
    #[error("max_tokens must be at least 1")]
    MaxTokens,
    #[error("duplicate seed {0}")]
    DuplicateSeed(u64),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// All variants to run for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub family: DatasetFamily,
    pub catalog: PromptCatalog,
    pub variants: Vec<Variant>,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
}

impl RunPlan {
    pub fn generations_per_item(&self) -> usize {
        self.variants.len()
    }

    pub fn task_variants(&self, task: Task) -> impl Iterator<Item = &Variant> {
        self.variants.iter().filter(move |v| v.task == task)
    }

    pub fn count(&self, task: Task) -> usize {
        self.task_variants(task).count()
    }

    pub fn template(&self, variant: &Variant) -> &PromptTemplate {
        self.catalog.get(variant.prompt_id).expect("plan variants reference catalog templates")
    }

    /// Prompt text sent to the model for `item` under `variant`.
    pub fn prompt_for(&self, item: &Item, variant: &Variant) -> Result<String, PlanError> {
        let shown =
            variant.apply(item).map_err(|_| RenderError::KindMismatch { id: item.id.clone(), family: self.family })?;
        Ok(render_prompt(self.template(variant), &shown, self.family)?)
    }

    /// Content hash over variants, templates and decoding parameters.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(json))
    }
}

pub fn build_run_plan(catalog: &PromptCatalog, config: &RunConfig, items: &ItemSet) -> Result<RunPlan, PlanError> {
    let family = items.family;
    if catalog.family != family {
        return Err(PlanError::FamilyMismatch { catalog: catalog.family, dataset: family });
    }
    if config.max_tokens == 0 {
        return Err(PlanError::MaxTokens);
    }
    let fixed = catalog.fixed().prompt_id;
    let positions = config.positions.unwrap_or_else(|| family.default_positions());

    let mut variants = Vec::new();
    for task in [Task::PromptRobustness, Task::ChoiceOrder, Task::NonGreedy] {
        if !config.tasks.contains(&task) {
            continue;
        }
        match task {
            Task::PromptRobustness => variants.extend(catalog.templates.iter().map(|t| Variant::prompt(t.prompt_id))),
            Task::ChoiceOrder => {
                if family.letter_range().is_none() || positions == 0 {
                    continue;
                }
                if positions > family.letter_range().unwrap_or(0) {
                    return Err(PlanError::PositionsExceedLetters { positions, family });
                }
                if config.short_items == ShortItemPolicy::Reject {
                    let short: Vec<String> = items
                        .items
                        .iter()
                        .filter(|i| i.options().is_some_and(|o| o.len() < positions))
                        .map(|i| i.id.clone())
                        .collect();
                    if !short.is_empty() {
                        return Err(PlanError::ShortItems { positions, items: short });
                    }
                }
                variants.extend((0..positions).map(|p| Variant::choice(fixed, p)));
            }
            Task::NonGreedy => {
                for (i, seed) in config.seeds.iter().enumerate() {
                    if config.seeds[..i].contains(seed) {
                        return Err(PlanError::DuplicateSeed(*seed));
                    }
                }
                variants.extend(config.seeds.iter().map(|&s| Variant::non_greedy(fixed, s)));
            }
        }
    }

    let plan = RunPlan {
        family,
        catalog: catalog.clone(),
        variants,
        max_tokens: config.max_tokens,
        system_prompt: config.system_prompt.clone(),
    };
    // Surface render problems (letter range, kind) before any inference.
    for item in &items.items {
        if let Some(variant) = plan.variants.first() {
            plan.prompt_for(item, variant)?;
        }
    }
    Ok(plan)
}
