use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ClientId, ClientUpdate, DispatchDecision, DispatchMode, FedError};
use crate::model::ShapeManifest;

/// Server-side aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[serde(rename = "feddwa")]
    FedDwa,
    #[serde(rename = "fedavg")]
    FedAvg,
    /// running average kept on the server, `beta` weight on the old value
    Ema { beta: f64 },
}

impl Aggregator {
    pub fn name(&self) -> &'static str {
        match self {
            Aggregator::FedDwa => "feddwa",
            Aggregator::FedAvg => "fedavg",
            Aggregator::Ema { .. } => "ema",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub aggregator: Aggregator,
    /// staleness exponent
    pub alpha: f64,
    pub gap_threshold: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            aggregator: Aggregator::FedDwa,
            alpha: 0.5,
            gap_threshold: 5,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<(), FedError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(FedError::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.gap_threshold == 0 {
            return Err(FedError::Config("gap_threshold must be >= 1".into()));
        }
        if let Aggregator::Ema { beta } = self.aggregator {
            check_beta(beta)?;
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<(), FedError> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(FedError::Config(format!("beta must lie in [0, 1], got {beta}")))
    }
}

/// `sum_i c_i w_i / sum_i c_i`, accumulated in iteration order. FedAvg and
/// FedDWA both go through here so equal coefficients give identical bits.
pub fn weighted_mean<'a, I>(terms: I, len: usize) -> Vec<f64>
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    let mut acc = vec![0.0; len];
    let mut total = 0.0;
    for (c, w) in terms {
        for (a, &x) in acc.iter_mut().zip(w) {
            *a += c * x;
        }
        total += c;
    }
    for a in &mut acc {
        *a /= total;
    }
    acc
}

/// Latest weights (`S_w`) and versions (`S_v`) per client.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    config: FedConfig,
    manifest: ShapeManifest,
    registered: BTreeSet<ClientId>,
    weights: BTreeMap<ClientId, Vec<f64>>,
    versions: BTreeMap<ClientId, u64>,
    /// running vector for the EMA aggregator
    running: Option<Vec<f64>>,
}

impl ServerState {
    pub fn new(
        clients: impl IntoIterator<Item = ClientId>,
        manifest: ShapeManifest,
        config: FedConfig,
    ) -> Result<Self, FedError> {
        config.validate()?;
        Ok(Self {
            config,
            manifest,
            registered: clients.into_iter().collect(),
            weights: BTreeMap::new(),
            versions: BTreeMap::new(),
            running: None,
        })
    }

    /// Seeds the EMA running vector, normally with the initial global model.
    pub fn with_running(mut self, initial: Vec<f64>) -> Result<Self, FedError> {
        self.check_len(initial.len())?;
        self.running = Some(initial);
        Ok(self)
    }

    pub fn config(&self) -> &FedConfig {
        &self.config
    }

    pub fn manifest(&self) -> &ShapeManifest {
        &self.manifest
    }

    pub fn weights(&self) -> &BTreeMap<ClientId, Vec<f64>> {
        &self.weights
    }

    pub fn versions(&self) -> &BTreeMap<ClientId, u64> {
        &self.versions
    }

    pub fn running(&self) -> Option<&[f64]> {
        self.running.as_deref()
    }

    /// Largest recorded version, 0 without records.
    pub fn latest_version(&self) -> u64 {
        self.versions.values().copied().max().unwrap_or(0)
    }

    /// `max_i (v_latest - S_v[i])` over recorded clients.
    pub fn max_gap(&self) -> u64 {
        let latest = self.latest_version();
        self.versions.values().map(|v| latest - v).max().unwrap_or(0)
    }

    fn check_len(&self, len: usize) -> Result<(), FedError> {
        let want = self.manifest.total_len();
        if len == want {
            Ok(())
        } else {
            Err(FedError::Manifest(format!("vector has {len} values, manifest needs {want}")))
        }
    }

    /// Records an upload. Only the uploader's entries change; rejected
    /// updates leave the state untouched.
    pub fn submit(&mut self, update: ClientUpdate) -> Result<(), FedError> {
        let id = update.client_id;
        if !self.registered.contains(&id) {
            return Err(FedError::UnknownClient(id));
        }
        if update.manifest != self.manifest {
            return Err(FedError::Manifest(format!("client {id} sent a different tensor layout")));
        }
        self.check_len(update.weights.len())?;
        let have = self.versions.get(&id).copied().unwrap_or(0);
        if update.version <= have {
            return Err(FedError::Stale {
                client: id,
                got: update.version,
                have,
            });
        }
        if update.version != have + 1 {
            return Err(FedError::VersionGap {
                client: id,
                got: update.version,
                expected: have + 1,
            });
        }
        self.weights.insert(id, update.weights);
        self.versions.insert(id, update.version);
        Ok(())
    }

    /// Installs a record verbatim, e.g. from a saved record table. Skipping
    /// versions is allowed here; going backwards is not.
    pub fn restore(&mut self, id: ClientId, version: u64, weights: Vec<f64>) -> Result<(), FedError> {
        if !self.registered.contains(&id) {
            return Err(FedError::UnknownClient(id));
        }
        self.check_len(weights.len())?;
        let have = self.versions.get(&id).copied().unwrap_or(0);
        if version == 0 || version < have {
            return Err(FedError::Stale {
                client: id,
                got: version,
                have,
            });
        }
        self.weights.insert(id, weights);
        self.versions.insert(id, version);
        Ok(())
    }

    /// Unnormalised staleness weights `(v_latest - S_v[i] + 1)^-alpha`.
    pub fn staleness_weights(&self) -> BTreeMap<ClientId, f64> {
        let latest = self.latest_version();
        self.versions
            .iter()
            .map(|(&id, &v)| (id, ((latest - v + 1) as f64).powf(-self.config.alpha)))
            .collect()
    }

    /// Normalised FedDWA coefficients; nonnegative, summing to one.
    pub fn feddwa_coefficients(&self) -> Result<BTreeMap<ClientId, f64>, FedError> {
        if self.versions.is_empty() {
            return Err(FedError::Empty);
        }
        let raw = self.staleness_weights();
        let total: f64 = raw.values().sum();
        Ok(raw.into_iter().map(|(id, l)| (id, l / total)).collect())
    }

    pub fn aggregate_feddwa(&self, uploader: ClientId) -> Result<Vec<f64>, FedError> {
        if self.weights.is_empty() {
            return Err(FedError::Empty);
        }
        if !self.weights.contains_key(&uploader) {
            return Err(FedError::NoRecord(uploader));
        }
        let lambda = self.staleness_weights();
        let terms = self.weights.iter().map(|(id, w)| (lambda[id], w.as_slice()));
        Ok(weighted_mean(terms, self.manifest.total_len()))
    }

    pub fn aggregate_fedavg(&self) -> Result<Vec<f64>, FedError> {
        if self.weights.is_empty() {
            return Err(FedError::Empty);
        }
        let terms = self.weights.values().map(|w| (1.0, w.as_slice()));
        Ok(weighted_mean(terms, self.manifest.total_len()))
    }

    /// `running <- beta * running + (1 - beta) * update`. Without a running
    /// vector the first update becomes it.
    pub fn aggregate_ema(&mut self, update: &[f64], beta: f64) -> Result<Vec<f64>, FedError> {
        check_beta(beta)?;
        self.check_len(update.len())?;
        let next = match self.running.take() {
            None => update.to_vec(),
            Some(mut run) => {
                for (r, &u) in run.iter_mut().zip(update) {
                    *r = beta * *r + (1.0 - beta) * u;
                }
                run
            }
        };
        self.running = Some(next.clone());
        Ok(next)
    }

    /// Aggregates with the configured rule after `uploader` has submitted.
    pub fn aggregate(&mut self, uploader: ClientId) -> Result<Vec<f64>, FedError> {
        match self.config.aggregator {
            Aggregator::FedDwa => self.aggregate_feddwa(uploader),
            Aggregator::FedAvg => self.aggregate_fedavg(),
            Aggregator::Ema { beta } => {
                let latest = self.weights.get(&uploader).ok_or(FedError::NoRecord(uploader))?.clone();
                self.aggregate_ema(&latest, beta)
            }
        }
    }

    /// Broadcast iff some recorded client lags at least `gap_threshold`
    /// versions behind the newest record.
    pub fn dispatch(&self, aggregated: Vec<f64>, uploader: ClientId) -> DispatchDecision {
        let mode = if self.max_gap() >= self.config.gap_threshold {
            DispatchMode::Broadcast
        } else {
            DispatchMode::Targeted(uploader)
        };
        DispatchDecision {
            mode,
            manifest: self.manifest.clone(),
            payload: aggregated,
        }
    }
}
