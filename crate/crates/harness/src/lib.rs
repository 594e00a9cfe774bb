//! Experiment orchestration for f-divergence policy gradients: TOML configs,
//! parallel seeds, JSONL metrics, aggregate CSV and SVG figures.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod maps;
pub mod records;
pub mod stats;
pub mod svg;

pub use config::{EnvKind, ExperimentConfig, LearnerKind, RewardKind};
pub use experiment::{run_experiment, ExperimentSummary, SeedStatus, SeedSummary};
pub use records::{aggregate, AggregateRow, MetricsRecord};
