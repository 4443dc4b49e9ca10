use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fed::{Aggregator, FedConfig};
use crate::graph::AdjacencyMode;
use crate::model::{Activation, AdamConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{key} = {value} is out of range, expected {bounds}")]
    OutOfRange {
        key: &'static str,
        value: String,
        bounds: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    #[default]
    #[serde(rename = "feddwa")]
    FedDwa,
    #[serde(rename = "fedavg")]
    FedAvg,
    Ema,
}

/// How often a client uploads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// once after its `e` local epochs
    #[default]
    PerRound,
    /// after every mini-batch
    PerBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulingMode {
    /// serialized virtual-time ticks, bit-reproducible
    #[default]
    Deterministic,
    /// one thread per client, real staleness
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    #[default]
    Uniform,
    LabelSkewed,
}

/// Everything a run needs besides the graph. Serialized flat as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub clients: usize,
    #[serde(alias = "e")]
    pub local_epochs: usize,
    #[serde(alias = "B")]
    pub batch_size: usize,
    #[serde(alias = "d")]
    pub embed_dim: usize,
    #[serde(alias = "k")]
    pub pref_dim: usize,
    pub metapaths: Vec<String>,
    pub adjacency_mode: AdjacencyMode,
    pub aggregator: AggregatorKind,
    pub alpha: f64,
    pub gap_threshold: u64,
    pub ema_beta: f64,
    /// per-client tick multipliers; empty means all 1
    pub speeds: Vec<u32>,
    pub seed: u64,
    pub rounds: u64,
    pub granularity: Granularity,
    pub mode: SchedulingMode,
    /// concurrent mode only: wall-clock length of one speed unit
    pub tick_millis: u64,
    pub learning_rate: f64,
    pub activation: Activation,
    /// neighbours sampled per node and meta path during training; `null`
    /// uses all
    pub sample_size: Option<usize>,
    pub partition: PartitionStrategy,
    pub dirichlet_concentration: f64,
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            clients: 3,
            local_epochs: 1,
            batch_size: 256,
            embed_dim: 128,
            pref_dim: 16,
            metapaths: vec!["APA".into(), "APPA".into()],
            adjacency_mode: AdjacencyMode::Counts,
            aggregator: AggregatorKind::FedDwa,
            alpha: 0.5,
            gap_threshold: 5,
            ema_beta: 0.9,
            speeds: Vec::new(),
            seed: 0,
            rounds: 50,
            granularity: Granularity::PerRound,
            mode: SchedulingMode::Deterministic,
            tick_millis: 5,
            learning_rate: 0.001,
            activation: Activation::Elu,
            sample_size: Some(16),
            partition: PartitionStrategy::Uniform,
            dirichlet_concentration: 0.5,
            test_fraction: 0.2,
        }
    }
}

fn out_of_range(key: &'static str, value: impl ToString, bounds: &'static str) -> ConfigError {
    ConfigError::OutOfRange {
        key,
        value: value.to_string(),
        bounds,
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.clients < 1 {
            return Err(out_of_range("clients", self.clients, ">= 1"));
        }
        if self.batch_size < 1 {
            return Err(out_of_range("batch_size", self.batch_size, ">= 1"));
        }
        if self.embed_dim < 1 {
            return Err(out_of_range("embed_dim", self.embed_dim, ">= 1"));
        }
        if self.pref_dim < 1 {
            return Err(out_of_range("pref_dim", self.pref_dim, ">= 1"));
        }
        if self.metapaths.is_empty() {
            return Err(ConfigError::Invalid("metapaths must not be empty".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(out_of_range("alpha", self.alpha, ">= 0"));
        }
        if self.gap_threshold < 1 {
            return Err(out_of_range("gap_threshold", self.gap_threshold, ">= 1"));
        }
        if !(0.0..=1.0).contains(&self.ema_beta) {
            return Err(out_of_range("ema_beta", self.ema_beta, "[0, 1]"));
        }
        if !self.speeds.is_empty() && self.speeds.len() != self.clients {
            return Err(ConfigError::Invalid(format!(
                "speeds lists {} clients, clients = {}",
                self.speeds.len(),
                self.clients
            )));
        }
        if let Some(&s) = self.speeds.iter().find(|&&s| s == 0) {
            return Err(out_of_range("speeds", s, "> 0"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(out_of_range("learning_rate", self.learning_rate, "> 0"));
        }
        if self.sample_size == Some(0) {
            return Err(out_of_range("sample_size", 0, ">= 1 or null"));
        }
        if !(self.dirichlet_concentration.is_finite() && self.dirichlet_concentration > 0.0) {
            return Err(out_of_range("dirichlet_concentration", self.dirichlet_concentration, "> 0"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(out_of_range("test_fraction", self.test_fraction, "(0, 1)"));
        }
        if self.mode == SchedulingMode::Concurrent && self.granularity == Granularity::PerBatch {
            return Err(ConfigError::Invalid(
                "per_batch granularity is only available in deterministic mode".into(),
            ));
        }
        Ok(())
    }

    /// Speed multiplier of client `c`.
    pub fn speed(&self, c: usize) -> u32 {
        self.speeds.get(c).copied().unwrap_or(1)
    }

    pub fn aggregator(&self) -> Aggregator {
        match self.aggregator {
            AggregatorKind::FedDwa => Aggregator::FedDwa,
            AggregatorKind::FedAvg => Aggregator::FedAvg,
            AggregatorKind::Ema => Aggregator::Ema { beta: self.ema_beta },
        }
    }

    pub fn fed_config(&self) -> FedConfig {
        FedConfig {
            aggregator: self.aggregator(),
            alpha: self.alpha,
            gap_threshold: self.gap_threshold,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}
