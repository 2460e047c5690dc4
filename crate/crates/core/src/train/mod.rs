//! Model configurations, datasets, training and evaluation.

pub mod config;
pub mod data;
pub mod run;

pub use crate::loss::cross_entropy;
pub use config::{build_model, Arch, InputKind, ModelConfig, Numeric, Width};
pub use data::{encode, synth_dataset, Dataset, Encoding, Sample, SeriesDataset, SynthSpec};
pub use run::{evaluate, predict, train, train_step, Engine, EpochStats, History, LossKind, TrainSpec};
