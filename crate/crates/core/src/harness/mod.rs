//! Experiment harness: data, training, and evaluation protocols.

pub mod dataset;
pub mod eval;
pub mod mixing;
pub mod study;
pub mod train;

pub use dataset::{generate_synthetic_dataset, Sample, SyntheticDataset};
pub use eval::{accuracy, eval_mixed_accuracy, eval_occlusion, DropMode, MixedAccuracy};
pub use mixing::{pair_batch, BetaChoice, MixSettings, MixerKind};
pub use study::{inconsistency_study, InconsistencyRow};
pub use train::{train, MetricsRow, TrainConfig, TrainOutcome};
