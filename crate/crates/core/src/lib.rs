//! Kolmogorov–Arnold (KAN) and MLP classifier heads for frozen-backbone
//! features, with analytic gradients and a reproducible training harness.
//!
//! The modules, bottom-up:
//!
//! - [`spline`]: uniform knot grids and Cox–de Boor basis evaluation.
//! - [`kan`]: the KAN linear layer with forward and backward passes.
//! - [`mlp`]: the dense baseline layer.
//! - [`loss`] and [`optim`]: softmax cross-entropy, SGD and Adam.
//! - [`dataset`]: KFV1 feature files, normalization, stratified splits.
//! - [`head`], [`config`] and [`train`]: two-layer heads, run configuration,
//!   the training loop and KAN-vs-MLP comparisons.

pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod head;
pub mod kan;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod spline;
pub mod train;

pub use config::{GridConfig, TrainConfig};
pub use dataset::{
    generate_blobs, load_features, save_features, stratified_split, BlobSpec, DatasetSplit,
    FeatureDataset, Normalization, SplitFractions,
};
pub use error::{KanError, Result};
pub use head::{Head, HeadKind};
pub use kan::{silu, silu_derivative, ForwardCache, KanGradients, KanLinearLayer};
pub use loss::softmax_cross_entropy;
pub use matrix::Matrix;
pub use mlp::{Activation, MlpLinearLayer};
pub use optim::{sgd_step, AdamConfig, AdamState, Optimizer, OptimizerConfig};
pub use spline::{make_uniform_grid, KnotGrid};
pub use train::{
    compare_experiment, evaluate, run_training, train, ComparisonReport, EpochMetrics, RunRecord,
};
