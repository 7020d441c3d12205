//! Gradient-balance training laboratory.
//!
//! This crate studies why long-tailed multi-label classifiers starve their
//! rare categories and how gradient-guided loss reweighting fixes it. A
//! sigmoid (one-vs-rest) classifier trained on a long-tailed label
//! distribution sees each rare category almost exclusively as a *negative*:
//! the accumulated suppressing gradient on that category's logit dwarfs the
//! encouraging gradient from its few positive samples, and the classifier
//! learns to predict "not present" regardless of input. The rebalancing
//! mechanism implemented here tracks, per category, the ratio of accumulated
//! positive to negative gradient magnitudes and uses it to amplify positive
//! gradients and damp negative ones until the two are in balance.
//!
//! The pieces:
//!
//! - [`balance`]: the gradient-ratio accumulator and the mapping from ratio
//!   to per-category loss weights — the heart of the method.
//! - [`heads`]: classification heads (per-category sigmoid, paired softmax)
//!   and the per-method loss gradients (plain baselines, negative-gradient
//!   masking, gradient-guided reweighting, and the auxiliary objectness
//!   task).
//! - [`model`]: a small MLP classifier with analytic parameter gradients and
//!   momentum SGD.
//! - [`train`]: the training driver that wires dataset, head, rebalancing
//!   and optimizer together and records ratio/metric traces.
//! - [`datagen`]: synthetic long-tailed datasets (Zipf-distributed category
//!   sizes, Gaussian clusters, detection-style background rows).
//! - [`metrics`]: per-group accuracy, classifier weight-norm statistics, and
//!   CSV emission for all recorded traces.
//!
//! Everything is `f64`, seeds are explicit everywhere, and identical seeds
//! reproduce runs bit-for-bit.

pub mod balance;
pub mod datagen;
pub mod error;
pub mod heads;
pub mod io;
pub mod metrics;
pub mod model;
pub mod train;

pub use balance::{compute_weights, GradAccumulator, MappingParams, TaskWeights};
pub use datagen::{generate, label_stats, zipf_counts, Dataset, Group, LabelStats, LongTailSpec};
pub use error::{Error, Result};
pub use heads::{
    BackwardOutput, GradSplit, HeadKind, LabelBatch, LogitBatch, Method, MethodConfig,
};
pub use metrics::{evaluate, ratio_report, weight_norms, GroupAccuracy, WeightNormReport};
pub use model::{ClassifierModel, ModelConfig, ParamGrads, SGDConfig, Velocity};
pub use train::{train_run, RatioSnapshot, RunTrace, TrainOutcome};
