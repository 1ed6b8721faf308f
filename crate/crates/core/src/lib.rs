//! Ordinal age estimation from tabular features, built from scratch.
//!
//! The crate trains a small feed-forward network to predict an age from a
//! feature vector, either as a regressor or as a classifier over integer-age
//! classes decoded through the softmax expected value. Its centerpiece is a
//! pairwise distance regularizer that spreads penultimate-layer embeddings
//! in proportion to absolute age differences, plus the evaluation metrics
//! (ordinality, systematic bias, Welch tests) used to study the
//! regression-to-the-mean effect on synthetic cohorts.
//!
//! Everything is deterministic: given a seed, datasets, training runs, and
//! reports reproduce bit for bit.

pub mod data;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod trainer;

pub use data::{Dataset, Sample, SeverityConfig, SynthConfig};
pub use losses::{LossConfig, LossKind, LossOutput};
pub use metrics::{GroupReport, MetricsReport};
pub use model::{HeadKind, MlpParams, ModelConfig};
pub use numerics::Matrix;
pub use rng::RngState;
pub use trainer::{TrainConfig, TrainHistory};
