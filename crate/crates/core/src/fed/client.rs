use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClientId, ClientUpdate, FedError};
use crate::graph::MetaPathAdjacency;
use crate::model::LocalTrainer;

/// A client: its private training nodes, local model with optimiser state,
/// upload counter and random stream.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: ClientId,
    pub trainer: LocalTrainer,
    pub nodes: Vec<usize>,
    pub version: u64,
    rng: ChaCha8Rng,
}

impl Client {
    pub fn new(id: ClientId, trainer: LocalTrainer, nodes: Vec<usize>, seed: u64) -> Result<Self, FedError> {
        if nodes.is_empty() {
            return Err(FedError::EmptyPartition(id));
        }
        Ok(Self {
            id,
            trainer,
            nodes,
            version: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Replaces the federated tensors. Preferences and Adam moments stay.
    pub fn install(&mut self, weights: &[f64]) -> Result<(), FedError> {
        self.trainer.params.load_federated(weights)?;
        Ok(())
    }

    fn update(&self) -> ClientUpdate {
        ClientUpdate {
            client_id: self.id,
            version: self.version,
            manifest: self.trainer.params.federated_manifest(),
            weights: self.trainer.params.federated_vector(),
        }
    }

    /// Installs `shared` (if any), trains `epochs` shuffled epochs with batch
    /// size `batch_size` and returns the next upload.
    pub fn client_round(
        &mut self,
        adjacency: &[MetaPathAdjacency],
        labels: &[Option<usize>],
        shared: Option<&[f64]>,
        epochs: usize,
        batch_size: usize,
    ) -> Result<ClientUpdate, FedError> {
        if let Some(w) = shared {
            self.install(w)?;
        }
        self.trainer
            .run_epochs::<_, _, FedError>(adjacency, &self.nodes, labels, epochs, batch_size, &mut self.rng, |_| Ok(()))?;
        self.version += 1;
        Ok(self.update())
    }

    /// Like [`Client::client_round`] but uploads after every batch. `exchange`
    /// receives each upload and may hand back weights to install before the
    /// next batch.
    #[allow(clippy::too_many_arguments)]
    pub fn client_round_per_batch<F>(
        &mut self,
        adjacency: &[MetaPathAdjacency],
        labels: &[Option<usize>],
        shared: Option<&[f64]>,
        epochs: usize,
        batch_size: usize,
        mut exchange: F,
    ) -> Result<(), FedError>
    where
        F: FnMut(ClientUpdate) -> Result<Option<Vec<f64>>, FedError>,
    {
        if let Some(w) = shared {
            self.install(w)?;
        }
        let id = self.id;
        let mut version = self.version;
        let nodes = std::mem::take(&mut self.nodes);
        let result = self.trainer.run_epochs(adjacency, &nodes, labels, epochs, batch_size, &mut self.rng, |t| {
            version += 1;
            let reply = exchange(ClientUpdate {
                client_id: id,
                version,
                manifest: t.params.federated_manifest(),
                weights: t.params.federated_vector(),
            })?;
            if let Some(w) = reply {
                t.params.load_federated(&w)?;
            }
            Ok(())
        });
        self.nodes = nodes;
        self.version = version;
        result.map(|_| ())
    }
}
