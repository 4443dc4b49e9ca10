//! Experiment harness: configuration, client partitions, synthetic graphs
//! and the round scheduler.

mod config;
mod partition;
pub mod presets;
mod runner;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::fed::FedError;
use crate::graph::GraphError;
use crate::model::{ModelError, ModelParams};

pub use config::{AggregatorKind, ConfigError, ExperimentConfig, Granularity, PartitionStrategy, SchedulingMode};
pub use partition::{chi_square, class_histograms, partition, Partition};
pub use runner::{data_plan, run_experiment, run_experiment_with, train_centralized, DataPlan, ExperimentOutcome};
pub use synthetic::{academic_schema, synthetic_hin, SyntheticConfig};

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub aggregator: String,
    /// mean cross-entropy of the global model over all training nodes
    pub loss: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub max_version_gap: u64,
    /// seconds; virtual ticks in deterministic mode
    pub elapsed: f64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot split {nodes} labelled nodes across {clients} clients")]
    TooManyClients { clients: usize, nodes: usize },
    #[error("invalid synthetic graph parameters: {0}")]
    Synthetic(String),
    #[error("training diverged at round {round}: {detail}")]
    Diverged {
        round: u64,
        detail: String,
        /// last global model before the failure, for inspection
        checkpoint: Box<ModelParams>,
    },
    #[error("client worker failed: {0}")]
    Worker(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Independent 64-bit seed for stream `tag`/`index` under a run seed.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
