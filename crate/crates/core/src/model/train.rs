use rand::seq::SliceRandom;
use rand::Rng;

use super::layers::{Activation, NeighborSampling};
use super::{adam_step, backward, loss, AdamConfig, ForwardOptions, ModelError, ModelParams, OptimizerState};
use crate::graph::MetaPathAdjacency;

/// Loss of one optimiser step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchReport {
    pub batch_size: usize,
    /// summed cross-entropy of the batch before the step
    pub loss: f64,
}

/// A model plus its optimiser state, trained by shuffled mini-batch Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrainer {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub activation: Activation,
    /// neighbour sample size, `None` for all neighbours
    pub sample_size: Option<usize>,
}

impl LocalTrainer {
    pub fn new(params: ModelParams, adam: AdamConfig, activation: Activation, sample_size: Option<usize>) -> Self {
        let optimizer = OptimizerState::new(&params, adam);
        Self {
            params,
            optimizer,
            activation,
            sample_size,
        }
    }

    /// Forward options for a training step; the sampling seed comes from
    /// `rng` so every step draws fresh neighbour samples.
    fn step_options<R: Rng + ?Sized>(&self, rng: &mut R) -> ForwardOptions {
        ForwardOptions {
            activation: self.activation,
            sampling: NeighborSampling::new(self.sample_size, rng.random()),
        }
    }

    /// Forward, backward and one Adam update on `batch`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        adjacency: &[MetaPathAdjacency],
        batch: &[usize],
        labels: &[Option<usize>],
        rng: &mut R,
    ) -> Result<BatchReport, ModelError> {
        let opts = self.step_options(rng);
        let (value, trace) = loss(&self.params, adjacency, batch, labels, &opts)?;
        if !value.is_finite() {
            return Err(ModelError::NonFiniteLoss(value));
        }
        let grads = backward(&self.params, adjacency, &trace)?;
        adam_step(&mut self.params, &grads, &mut self.optimizer)?;
        Ok(BatchReport {
            batch_size: batch.len(),
            loss: value,
        })
    }

    /// `epochs` passes over `nodes`, shuffled into batches of `batch_size`.
    /// `after_batch` runs after every optimiser step and may replace the
    /// parameters (per-batch federated exchange).
    #[allow(clippy::too_many_arguments)]
    pub fn run_epochs<R, F, E>(
        &mut self,
        adjacency: &[MetaPathAdjacency],
        nodes: &[usize],
        labels: &[Option<usize>],
        epochs: usize,
        batch_size: usize,
        rng: &mut R,
        mut after_batch: F,
    ) -> Result<Vec<BatchReport>, E>
    where
        R: Rng + ?Sized,
        F: FnMut(&mut Self) -> Result<(), E>,
        E: From<ModelError>,
    {
        assert!(batch_size > 0, "batch size must be positive");
        let mut order = nodes.to_vec();
        let mut reports = Vec::new();
        for _ in 0..epochs {
            order.shuffle(rng);
            for batch in order.chunks(batch_size) {
                reports.push(self.step(adjacency, batch, labels, rng)?);
                after_batch(self)?;
            }
        }
        Ok(reports)
    }
}
