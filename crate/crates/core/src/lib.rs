//! Noise-robust training toolkit.
//!
//! Model-agnostic defences against noisy labels (label smoothing, mixup,
//! the Lq loss, and large-loss instance selection by mini-batch discard or
//! train-set pruning) around a small softmax classifier, together with a
//! synthetic benchmark that injects controlled label noise.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod losses;
pub mod mixup;
pub mod numerics;
pub mod records;
pub mod selection;
pub mod smoothing;
pub mod trainer;

pub use config::{DataConfig, ExperimentConfig};
pub use dataset::{ClipId, Dataset, Example, ExampleId};
pub use error::{Error, Result};
pub use harness::{NoiseKind, NoiseSpec, RunSummary, TrackedDataset};
pub use losses::{LossReport, LossSpec};
pub use mixup::{MixupPolicy, Pairing, Sample};
pub use numerics::{ProbVector, RngStream};
pub use selection::{SelectionRule, StagePlan, Strategy};
pub use smoothing::{LabelDistribution, NoiseGroup, SmoothingPolicy};
pub use trainer::{Architecture, EpochRecord, ModelParams, TrainConfig, TrainOutput};
