//! Parameter server and client side of the federated protocol.
//!
//! The server keeps, per client, the latest uploaded weight vector and its
//! version. Aggregation is one of FedDWA (staleness-discounted mean), FedAvg
//! or an exponential moving average; after each aggregation the server
//! answers the uploader only, or broadcasts when some client lags too far.

mod client;
mod log;
mod server;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ShapeManifest};

pub use client::Client;
pub use log::{DecisionLog, DecisionRecord};
pub use server::{weighted_mean, Aggregator, FedConfig, ServerState};

pub type ClientId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FedError {
    #[error("client {0} is not registered")]
    UnknownClient(ClientId),
    #[error("stale update from client {client}: version {got}, server has {have}")]
    Stale { client: ClientId, got: u64, have: u64 },
    #[error("client {client} skipped versions: sent {got}, expected {expected}")]
    VersionGap {
        client: ClientId,
        got: u64,
        expected: u64,
    },
    #[error("client {0} has no recorded weights")]
    NoRecord(ClientId),
    #[error("no client records to aggregate")]
    Empty,
    #[error("shape manifest mismatch: {0}")]
    Manifest(String),
    #[error("invalid federation config: {0}")]
    Config(String),
    #[error("client {0} has no training nodes")]
    EmptyPartition(ClientId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A client upload: its id, its full federated weight vector and the
/// version it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: ClientId,
    pub version: u64,
    pub manifest: ShapeManifest,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchMode {
    Targeted(ClientId),
    Broadcast,
}

/// What the server sends back after an aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub mode: DispatchMode,
    pub manifest: ShapeManifest,
    pub payload: Vec<f64>,
}

impl DispatchDecision {
    /// True when `client` should install the payload.
    pub fn reaches(&self, client: ClientId) -> bool {
        match self.mode {
            DispatchMode::Broadcast => true,
            DispatchMode::Targeted(c) => c == client,
        }
    }
}
