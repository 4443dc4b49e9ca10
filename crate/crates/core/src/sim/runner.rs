use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, partition, ExperimentConfig, Granularity, Partition, RoundMetrics, SchedulingMode, SimError};
use crate::eval::{evaluate, EvalSplit};
use crate::fed::{Aggregator, Client, ClientId, DecisionRecord, DispatchDecision, FedError, ServerState};
use crate::graph::{metapath_adjacency, HeterogeneousGraph, MetaPathAdjacency, MetaPathSpec, TypeAlphabet};
use crate::model::{loss, ForwardOptions, LocalTrainer, ModelDims, ModelError, ModelParams};

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub metrics: Vec<RoundMetrics>,
    /// global model: aggregated shared tensors plus each owner's preferences
    pub global: ModelParams,
    pub split: EvalSplit,
    pub partition: Partition,
    pub decisions: Vec<DecisionRecord>,
}

struct Setup {
    adjacency: Vec<MetaPathAdjacency>,
    labels: Vec<Option<usize>>,
    split: EvalSplit,
    partition: Partition,
    owners: Vec<Option<usize>>,
    init: ModelParams,
    eval_opts: ForwardOptions,
}

impl Setup {
    fn new(config: &ExperimentConfig, graph: &HeterogeneousGraph) -> Result<Self, SimError> {
        config.validate()?;
        let alphabet = TypeAlphabet::default();
        let adjacency = config
            .metapaths
            .iter()
            .map(|name| {
                let spec = MetaPathSpec::parse(name, &alphabet)?;
                metapath_adjacency(graph, &spec, config.adjacency_mode)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<Option<usize>> = (0..graph.target_count()).map(|t| graph.target_label(t)).collect();
        let classes = graph.label_count();
        if classes == 0 {
            return Err(super::ConfigError::Invalid("graph has no labelled target nodes".into()).into());
        }
        let split = EvalSplit::stratified(&labels, config.test_fraction, derive_seed(config.seed, "split", 0))?;
        let partition = partition(
            &split.train,
            &labels,
            config.clients,
            config.partition,
            config.dirichlet_concentration,
            derive_seed(config.seed, "partition", 0),
        )?;
        let owners = partition.owners(labels.len());
        let dims = ModelDims {
            embed: config.embed_dim,
            pref: config.pref_dim,
            labels: classes,
            targets: graph.target_count(),
            metapaths: adjacency.len(),
        };
        let init = ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "init", 0)));
        Ok(Self {
            adjacency,
            labels,
            split,
            partition,
            owners,
            init,
            eval_opts: ForwardOptions {
                activation: config.activation,
                ..ForwardOptions::default()
            },
        })
    }

    fn client(&self, config: &ExperimentConfig, c: ClientId) -> Result<Client, SimError> {
        let trainer = LocalTrainer::new(self.init.clone(), config.adam(), config.activation, config.sample_size);
        Ok(Client::new(
            c,
            trainer,
            self.partition.clients[c].clone(),
            derive_seed(config.seed, "client", c as u64),
        )?)
    }

    /// Shared tensors from `shared`, preference rows from each node's owner.
    fn assemble(&self, shared: &[f64], prefs: &[&Array2<f64>]) -> Result<ModelParams, SimError> {
        let mut p = self.init.clone();
        p.load_federated(shared)?;
        for (n, owner) in self.owners.iter().enumerate() {
            if let Some(c) = owner {
                p.preference.row_mut(n).assign(&prefs[*c].row(n));
            }
        }
        Ok(p)
    }

    fn measure(&self, params: &ModelParams, round: u64, aggregator: &str, gap: u64, elapsed: f64) -> Result<RoundMetrics, SimError> {
        let (total, _) = loss(params, &self.adjacency, &self.split.train, &self.labels, &self.eval_opts)?;
        let scores = evaluate(params, &self.adjacency, &self.labels, &self.split.test, &self.eval_opts)?;
        Ok(RoundMetrics {
            round,
            aggregator: aggregator.to_string(),
            loss: total / self.split.train.len() as f64,
            micro_f1: scores.micro_f1,
            macro_f1: scores.macro_f1,
            max_version_gap: gap,
            elapsed,
        })
    }
}

/// Adjacencies, labels, split and partition exactly as a run with `config`
/// builds them.
#[derive(Debug, Clone)]
pub struct DataPlan {
    pub adjacency: Vec<MetaPathAdjacency>,
    pub labels: Vec<Option<usize>>,
    pub split: EvalSplit,
    pub partition: Partition,
}

pub fn data_plan(config: &ExperimentConfig, graph: &HeterogeneousGraph) -> Result<DataPlan, SimError> {
    let s = Setup::new(config, graph)?;
    Ok(DataPlan {
        adjacency: s.adjacency,
        labels: s.labels,
        split: s.split,
        partition: s.partition,
    })
}

fn prefs(clients: &[Client]) -> Vec<&Array2<f64>> {
    clients.iter().map(|c| &c.trainer.params.preference).collect()
}

fn pref_refs(p: &[Array2<f64>]) -> Vec<&Array2<f64>> {
    p.iter().collect()
}

fn diverged(round: u64, err: impl ToString, checkpoint: ModelParams) -> SimError {
    SimError::Diverged {
        round,
        detail: err.to_string(),
        checkpoint: Box::new(checkpoint),
    }
}

fn is_divergence(e: &FedError) -> bool {
    matches!(
        e,
        FedError::Model(ModelError::NonFiniteLoss(_)) | FedError::Model(ModelError::NonFiniteGradient(_))
    )
}

/// Aggregates after `uploader`'s submission, logs the decision and returns
/// the reply.
fn exchange(server: &mut ServerState, uploader: ClientId, round: u64, log: &mut Vec<DecisionRecord>) -> Result<DispatchDecision, FedError> {
    let aggregated = server.aggregate(uploader)?;
    let coefficients = match server.config().aggregator {
        Aggregator::FedDwa => server.feddwa_coefficients()?,
        Aggregator::FedAvg => {
            let n = server.weights().len() as f64;
            server.weights().keys().map(|&k| (k, 1.0 / n)).collect()
        }
        Aggregator::Ema { beta } => [(uploader, 1.0 - beta)].into_iter().collect(),
    };
    let decision = server.dispatch(aggregated, uploader);
    log.push(DecisionRecord {
        round,
        uploader,
        version: server.versions()[&uploader],
        aggregator: server.config().aggregator.name().to_string(),
        coefficients,
        versions: server.versions().clone(),
        max_gap: server.max_gap(),
        mode: decision.mode,
    });
    Ok(decision)
}

pub fn run_experiment(config: &ExperimentConfig, graph: &HeterogeneousGraph) -> Result<ExperimentOutcome, SimError> {
    run_experiment_with(config, graph, |_| Ok(()))
}

/// Runs the configured experiment, handing every round's metrics to
/// `on_round` as soon as they exist. Round 0 is the untrained model.
pub fn run_experiment_with<F>(config: &ExperimentConfig, graph: &HeterogeneousGraph, on_round: F) -> Result<ExperimentOutcome, SimError>
where
    F: FnMut(&RoundMetrics) -> std::io::Result<()>,
{
    let setup = Setup::new(config, graph)?;
    match config.mode {
        SchedulingMode::Deterministic => run_deterministic(config, setup, on_round),
        SchedulingMode::Concurrent => run_concurrent(config, setup, on_round),
    }
}

/// Virtual-time scheduler. Tick `t` (rounds are ticks) lets every client
/// with `(t + 1) % speed == 0` train from the last weights delivered to it.
/// All due uploads are recorded before the server aggregates once per
/// uploader, so equal speeds leave every version equal at the end of a tick.
fn run_deterministic<F>(config: &ExperimentConfig, setup: Setup, mut on_round: F) -> Result<ExperimentOutcome, SimError>
where
    F: FnMut(&RoundMetrics) -> std::io::Result<()>,
{
    let n = config.clients;
    let name = config.aggregator().name();
    let mut clients = (0..n).map(|c| setup.client(config, c)).collect::<Result<Vec<_>, _>>()?;
    let client_labels: Vec<_> = (0..n).map(|c| setup.partition.client_labels(c, &setup.labels)).collect();
    let mut server = ServerState::new(0..n, setup.init.federated_manifest(), config.fed_config())?
        .with_running(setup.init.federated_vector())?;
    let mut pending: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut global = setup.init.federated_vector();
    let mut decisions = Vec::new();

    let first = setup.measure(&setup.assemble(&global, &prefs(&clients))?, 0, name, 0, 0.0)?;
    on_round(&first)?;
    let mut metrics = vec![first];

    for t in 0..config.rounds {
        let round = t + 1;
        let due: Vec<usize> = (0..n).filter(|&c| round % config.speed(c) as u64 == 0).collect();
        let fail = |e: FedError, clients: &[Client], global: &[f64]| -> SimError {
            if is_divergence(&e) {
                match setup.assemble(global, &prefs(clients)) {
                    Ok(ckpt) => diverged(round, e, ckpt),
                    Err(other) => other,
                }
            } else {
                e.into()
            }
        };
        match config.granularity {
            Granularity::PerRound => {
                for &c in &due {
                    let shared = pending[c].take();
                    let update = clients[c]
                        .client_round(&setup.adjacency, &client_labels[c], shared.as_deref(), config.local_epochs, config.batch_size)
                        .map_err(|e| fail(e, &clients, &global))?;
                    server.submit(update)?;
                }
                for &c in &due {
                    let decision = exchange(&mut server, c, round, &mut decisions)?;
                    for (k, slot) in pending.iter_mut().enumerate() {
                        if decision.reaches(k) {
                            *slot = Some(decision.payload.clone());
                        }
                    }
                    global = decision.payload;
                }
            }
            Granularity::PerBatch => {
                for &c in &due {
                    let shared = pending[c].take();
                    let result = clients[c].client_round_per_batch(
                        &setup.adjacency,
                        &client_labels[c],
                        shared.as_deref(),
                        config.local_epochs,
                        config.batch_size,
                        |update| {
                            server.submit(update)?;
                            let decision = exchange(&mut server, c, round, &mut decisions)?;
                            for (k, slot) in pending.iter_mut().enumerate() {
                                if k != c && decision.reaches(k) {
                                    *slot = Some(decision.payload.clone());
                                }
                            }
                            global = decision.payload.clone();
                            Ok(decision.reaches(c).then_some(decision.payload))
                        },
                    );
                    result.map_err(|e| fail(e, &clients, &global))?;
                }
            }
        }
        if global.iter().any(|v| !v.is_finite()) {
            let ckpt = setup.assemble(&global, &prefs(&clients))?;
            return Err(diverged(round, "non-finite aggregated weights", ckpt));
        }
        let model = setup.assemble(&global, &prefs(&clients))?;
        let m = setup.measure(&model, round, name, server.max_gap(), round as f64)?;
        if !m.loss.is_finite() {
            return Err(diverged(round, format!("non-finite loss {}", m.loss), model));
        }
        on_round(&m)?;
        metrics.push(m);
    }

    let global = setup.assemble(&global, &prefs(&clients))?;
    Ok(ExperimentOutcome {
        metrics,
        global,
        split: setup.split,
        partition: setup.partition,
        decisions,
    })
}

enum Upload {
    Update(crate::fed::ClientUpdate, Array2<f64>),
    Failed(ClientId, FedError),
}

/// One thread per client. A client trains, sleeps `speed * tick_millis`,
/// uploads, and starts over from the newest reply it has received. The
/// server counts a round every `clients` uploads.
fn run_concurrent<F>(config: &ExperimentConfig, setup: Setup, mut on_round: F) -> Result<ExperimentOutcome, SimError>
where
    F: FnMut(&RoundMetrics) -> std::io::Result<()>,
{
    let n = config.clients;
    let name = config.aggregator().name();
    let start = Instant::now();
    let mut server = ServerState::new(0..n, setup.init.federated_manifest(), config.fed_config())?
        .with_running(setup.init.federated_vector())?;
    let mut global = setup.init.federated_vector();
    let mut prefs: Vec<Array2<f64>> = vec![setup.init.preference.clone(); n];
    let mut decisions = Vec::new();

    let first = setup.measure(&setup.assemble(&global, &pref_refs(&prefs))?, 0, name, 0, 0.0)?;
    on_round(&first)?;
    let mut metrics = vec![first];
    if config.rounds == 0 {
        return Ok(ExperimentOutcome {
            metrics,
            global: setup.assemble(&global, &pref_refs(&prefs))?,
            split: setup.split,
            partition: setup.partition,
            decisions,
        });
    }

    let clients = (0..n).map(|c| setup.client(config, c)).collect::<Result<Vec<_>, _>>()?;
    let stop = AtomicBool::new(false);
    let (up_tx, up_rx) = mpsc::channel::<Upload>();
    let mut reply_txs = Vec::with_capacity(n);
    let mut reply_rxs = Vec::with_capacity(n);
    for _ in 0..n {
        let (tx, rx) = mpsc::channel::<Vec<f64>>();
        reply_txs.push(tx);
        reply_rxs.push(rx);
    }

    let result: Result<(), SimError> = std::thread::scope(|scope| {
        for (mut client, rx) in clients.into_iter().zip(reply_rxs) {
            let up_tx = up_tx.clone();
            let labels = setup.partition.client_labels(client.id, &setup.labels);
            let adjacency = &setup.adjacency;
            let stop = &stop;
            let pause = Duration::from_millis(config.tick_millis * config.speed(client.id) as u64);
            scope.spawn(move || {
                let mut shared: Option<Vec<f64>> = None;
                while !stop.load(Ordering::Relaxed) {
                    while let Ok(w) = rx.try_recv() {
                        shared = Some(w);
                    }
                    let msg = match client.client_round(adjacency, &labels, shared.take().as_deref(), config.local_epochs, config.batch_size) {
                        Ok(u) => Upload::Update(u, client.trainer.params.preference.clone()),
                        Err(e) => Upload::Failed(client.id, e),
                    };
                    let failed = matches!(msg, Upload::Failed(..));
                    std::thread::sleep(pause);
                    if up_tx.send(msg).is_err() || failed {
                        break;
                    }
                }
            });
        }
        drop(up_tx);

        let mut uploads = 0usize;
        let outcome = loop {
            let msg = match up_rx.recv() {
                Ok(m) => m,
                Err(_) => break Err(SimError::Worker("all clients stopped".into())),
            };
            let (update, p) = match msg {
                Upload::Update(u, p) => (u, p),
                Upload::Failed(c, e) => {
                    let err = if is_divergence(&e) {
                        match setup.assemble(&global, &pref_refs(&prefs)) {
                            Ok(ckpt) => diverged(metrics.len() as u64, format!("client {c}: {e}"), ckpt),
                            Err(other) => other,
                        }
                    } else {
                        SimError::Worker(format!("client {c}: {e}"))
                    };
                    break Err(err);
                }
            };
            let c = update.client_id;
            prefs[c] = p;
            let round = uploads as u64 / n as u64 + 1;
            if let Err(e) = server.submit(update) {
                break Err(e.into());
            }
            let decision = match exchange(&mut server, c, round, &mut decisions) {
                Ok(d) => d,
                Err(e) => break Err(e.into()),
            };
            for (k, tx) in reply_txs.iter().enumerate() {
                if decision.reaches(k) {
                    let _ = tx.send(decision.payload.clone());
                }
            }
            global = decision.payload;
            uploads += 1;
            if uploads.is_multiple_of(n) {
                let model = match setup.assemble(&global, &pref_refs(&prefs)) {
                    Ok(m) => m,
                    Err(e) => break Err(e),
                };
                let m = match setup.measure(&model, round, name, server.max_gap(), start.elapsed().as_secs_f64()) {
                    Ok(m) => m,
                    Err(e) => break Err(e),
                };
                if !m.loss.is_finite() {
                    break Err(diverged(round, format!("non-finite loss {}", m.loss), model));
                }
                if let Err(e) = on_round(&m) {
                    break Err(e.into());
                }
                metrics.push(m);
                if round >= config.rounds {
                    break Ok(());
                }
            }
        };
        stop.store(true, Ordering::Relaxed);
        drop(reply_txs);
        outcome
    });
    result?;

    Ok(ExperimentOutcome {
        global: setup.assemble(&global, &pref_refs(&prefs))?,
        metrics,
        split: setup.split,
        partition: setup.partition,
        decisions,
    })
}

/// Plain single-model training on the whole training split, one round per
/// `local_epochs` epochs, with the random streams the federated runner
/// gives its first client.
pub fn train_centralized(config: &ExperimentConfig, graph: &HeterogeneousGraph) -> Result<ExperimentOutcome, SimError> {
    let config = ExperimentConfig {
        clients: 1,
        speeds: Vec::new(),
        ..config.clone()
    };
    let setup = Setup::new(&config, graph)?;
    let mut client = setup.client(&config, 0)?;
    let labels = setup.partition.client_labels(0, &setup.labels);
    let shared = |c: &Client| c.trainer.params.federated_vector();
    let assemble = |c: &Client| setup.assemble(&shared(c), &[&c.trainer.params.preference]);

    let mut metrics = vec![setup.measure(&assemble(&client)?, 0, "centralized", 0, 0.0)?];
    for t in 0..config.rounds {
        let round = t + 1;
        if let Err(e) = client.client_round(&setup.adjacency, &labels, None, config.local_epochs, config.batch_size) {
            if is_divergence(&e) {
                return Err(diverged(round, e, assemble(&client)?));
            }
            return Err(e.into());
        }
        let m = setup.measure(&assemble(&client)?, round, "centralized", 0, round as f64)?;
        if !m.loss.is_finite() {
            return Err(diverged(round, format!("non-finite loss {}", m.loss), assemble(&client)?));
        }
        metrics.push(m);
    }
    Ok(ExperimentOutcome {
        metrics,
        global: assemble(&client)?,
        split: setup.split,
        partition: setup.partition,
        decisions: Vec::new(),
    })
}
