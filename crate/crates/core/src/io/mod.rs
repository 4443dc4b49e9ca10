//! Files: experiment configs, graph directories, checkpoints, embedding
//! exports, metrics logs and run manifests.

mod checkpoint;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{load_graph, read_schema, write_graph_tables, GraphError, HeterogeneousGraph, LoadOptions, MetaPathAdjacency};
use crate::model::{embed, ForwardOptions, ModelError, ModelParams};
use crate::sim::{ConfigError, ExperimentConfig, RoundMetrics};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointManifest};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Range(#[from] ConfigError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parses and validates a JSON config. Blank text gives the defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, IoError> {
    if text.trim().is_empty() {
        return Ok(ExperimentConfig::default());
    }
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, IoError> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

/// Reads `nodes.csv`, `edges.csv` and `schema.csv` from `dir`.
pub fn read_graph_dir(dir: &Path, options: &LoadOptions) -> Result<HeterogeneousGraph, IoError> {
    let open = |name: &str| -> Result<BufReader<File>, IoError> { Ok(BufReader::new(File::open(dir.join(name))?)) };
    let schema = read_schema(open("schema.csv")?)?;
    Ok(load_graph(open("nodes.csv")?, open("edges.csv")?, schema, options)?)
}

pub fn write_graph_dir(graph: &HeterogeneousGraph, dir: &Path) -> Result<(), IoError> {
    Ok(write_graph_tables(graph, dir)?)
}

/// Hex SHA-256 over a canonical rendering of nodes, edges and schema.
pub fn dataset_fingerprint(graph: &HeterogeneousGraph) -> String {
    let mut h = Sha256::new();
    for n in graph.nodes() {
        h.update(format!("n {} {} {:?}\n", n.id, n.node_type.as_str(), n.label));
    }
    for e in graph.edges() {
        h.update(format!("e {} {} {}\n", e.src, e.relation.as_str(), e.dst));
    }
    for t in graph.schema().triples() {
        h.update(format!("s {} {} {}\n", t.src_type.as_str(), t.relation.as_str(), t.dst_type.as_str()));
    }
    for r in graph.schema().symmetric_relations() {
        h.update(format!("y {}\n", r.as_str()));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub code_version: String,
    pub dataset_fingerprint: String,
    pub outputs: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, graph: &HeterogeneousGraph) -> Self {
        Self {
            config: config.clone(),
            seed: config.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_fingerprint: dataset_fingerprint(graph),
            outputs: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// JSON-lines writer shared by concurrent producers; each line is written
/// whole under a lock.
pub struct JsonLines<W: Write> {
    out: Mutex<W>,
}

impl<W: Write> JsonLines<W> {
    pub fn new(out: W) -> Self {
        Self { out: Mutex::new(out) }
    }

    pub fn write<T: Serialize>(&self, value: &T) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(value)?;
        line.push(b'\n');
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        out.write_all(&line)?;
        out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<RoundMetrics>, IoError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(IoError::from))
        .collect()
}

/// CSV with `node_id,e1..ed` for every target node.
pub fn export_embeddings<W: Write>(
    params: &ModelParams,
    adjacency: &[MetaPathAdjacency],
    graph: &HeterogeneousGraph,
    opts: &ForwardOptions,
    out: W,
) -> Result<usize, IoError> {
    let targets: Vec<usize> = (0..graph.target_count()).collect();
    let emb = embed(params, adjacency, &targets, opts)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node_id".to_string()];
    header.extend((1..=emb.ncols()).map(|k| format!("e{k}")));
    w.write_record(&header)?;
    for (t, row) in emb.rows().into_iter().enumerate() {
        let mut rec = vec![graph.target_nodes()[t].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(targets.len())
}
