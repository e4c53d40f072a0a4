//! Corpus generation, evaluation and the ablation grid.

pub mod ablation;
pub mod generate;
pub mod metrics;
