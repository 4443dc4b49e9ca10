//! Local embedding model: node-level attention over meta-path neighbours,
//! meta-path-level attention against per-node preference vectors, a linear
//! classifier with cross-entropy, hand-written gradients and Adam.

mod adam;
mod backward;
mod forward;
pub mod layers;
mod params;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use backward::backward;
pub use forward::{
    embed, forward, loss, predict, structural_features, ForwardOptions, ForwardTrace, NodeTrace,
    PathTrace,
};
pub use layers::{Activation, NeighborSampling};
pub use params::{ModelDims, ModelParams, ShapeManifest, TensorShape};
pub use train::{BatchReport, LocalTrainer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("node {node} out of range (have {len})")]
    NodeOutOfRange { node: usize, len: usize },
    #[error("node {0} has no label")]
    Unlabeled(usize),
    #[error("node {node} has label {label}, model has {labels} classes")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        labels: usize,
    },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
}
