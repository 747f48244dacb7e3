//! Robustness evaluation for language models: prompt rewording, choice-order
//! swaps and sampling seeds, scored as accuracy ranges and consistency rates.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod extraction;
pub mod inference;
pub mod manifest;
pub mod math;
pub mod metrics;
pub mod orchestrator;
pub mod perturbation;
pub mod report;
pub mod scoring;
