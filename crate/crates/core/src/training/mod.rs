//! Data pipeline and adversarial training loop.

mod config;
mod data;
mod trainer;

pub use config::TrainConfig;
pub use data::{load_dataset, sample_batch, split_validation, Utterance};
pub use trainer::{train, StepReport, TrainOutcome, TrainState, Trainer, ValidationReport};
