//! Federated embedding of heterogeneous information networks.
//!
//! Clients train a two-level attention model (node-level attention over
//! meta-path neighbours, then meta-path-level attention against a per-node
//! preference vector) on their private labels, and a parameter server merges
//! their weights with staleness-discounted averaging.
//!
//! Module map:
//! - [`graph`]: typed graph, schema, meta-path adjacency counting
//! - [`model`]: attention model, exact gradients, Adam
//! - [`fed`]: server records, FedDWA / FedAvg / EMA aggregation, dispatch
//! - [`sim`]: partitioning, synthetic graphs, experiment runner
//! - [`eval`]: Micro/Macro-F1, splits, curves
//! - [`io`]: config, checkpoints, embeddings, run logs

pub mod eval;
pub mod fed;
pub mod graph;
pub mod io;
pub mod model;
pub mod sim;

pub use eval::{f1_scores, EvalSplit};
pub use fed::{Aggregator, ClientUpdate, DispatchDecision, ServerState};
pub use graph::{HeterogeneousGraph, MetaPathAdjacency, MetaPathSpec};
pub use model::{ModelDims, ModelParams};
pub use sim::{ExperimentConfig, RoundMetrics};
