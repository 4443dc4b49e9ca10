use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hinfed_core::eval::{curve_extract, evaluate, write_curves};
use hinfed_core::fed::{Aggregator, DecisionLog, FedConfig, ServerState};
use hinfed_core::graph::{HeterogeneousGraph, LoadOptions, NodeType};
use hinfed_core::io::{
    dataset_fingerprint, load_checkpoint, parse_config, read_graph_dir, save_checkpoint, write_graph_dir, JsonLines,
    RunManifest,
};
use hinfed_core::model::{ForwardOptions, ModelDims, ModelParams, ShapeManifest, TensorShape};
use hinfed_core::sim::{
    chi_square, class_histograms, data_plan, run_experiment_with, synthetic_hin, train_centralized, ExperimentConfig,
    PartitionStrategy, SimError, SyntheticConfig,
};
use serde_json::{json, Value};

use crate::errors::Detailed;
use crate::{AggregateArgs, DemoAggregator, ExportArgs, GenerateArgs, GraphArgs, PartitionArgs, RunArgs, Strategy, TrainArgs};

fn load_graph_at(dir: &Path, target_type: &str) -> Result<HeterogeneousGraph> {
    let options = LoadOptions {
        target_type: NodeType::new(target_type),
    };
    read_graph_dir(dir, &options).with_context(|| format!("reading graph from {}", dir.display()))
}

fn require_graph(args: &GraphArgs) -> Result<(HeterogeneousGraph, PathBuf)> {
    let dir = args.graph.clone().ok_or_else(|| anyhow!("--graph is required"))?;
    Ok((load_graph_at(&dir, &args.target_type)?, dir))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => parse_config(p).with_context(|| format!("config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn generate(a: GenerateArgs) -> Result<Value> {
    let base = SyntheticConfig::preset(a.seed);
    let cfg = SyntheticConfig {
        n_authors: a.authors.unwrap_or(base.n_authors),
        n_papers: a.papers.unwrap_or(base.n_papers),
        n_venues: a.venues.unwrap_or(base.n_venues),
        classes: a.classes.unwrap_or(base.classes),
        p_in: a.p_in.unwrap_or(base.p_in),
        p_out: a.p_out.unwrap_or(base.p_out),
        citations: a.citations.unwrap_or(base.citations),
        seed: a.seed,
    };
    let g = synthetic_hin(&cfg)?;
    write_graph_dir(&g, &a.out)?;
    Ok(json!({
        "out": a.out,
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "targets": g.target_count(),
        "classes": g.label_count(),
        "fingerprint": dataset_fingerprint(&g),
    }))
}

pub fn partition(a: PartitionArgs) -> Result<Value> {
    let (g, _) = require_graph(&a.graph)?;
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(c) = a.clients {
        cfg.clients = c;
        cfg.speeds.clear();
    }
    if let Some(s) = a.strategy {
        cfg.partition = match s {
            Strategy::Uniform => PartitionStrategy::Uniform,
            Strategy::LabelSkewed => PartitionStrategy::LabelSkewed,
        };
    }
    if let Some(c) = a.concentration {
        cfg.dirichlet_concentration = c;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let plan = data_plan(&cfg, &g)?;
    let hist = class_histograms(&plan.partition, &plan.labels, g.label_count());
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["node_id", "client"])?;
        let mut rows: Vec<(usize, usize)> = plan
            .partition
            .clients
            .iter()
            .enumerate()
            .flat_map(|(c, nodes)| nodes.iter().map(move |&t| (t, c)))
            .collect();
        rows.sort_unstable();
        for (t, c) in rows {
            w.write_record([g.target_nodes()[t].to_string(), c.to_string()])?;
        }
        w.flush()?;
    }
    let clients: Vec<Value> = plan
        .partition
        .clients
        .iter()
        .zip(&hist)
        .enumerate()
        .map(|(c, (nodes, h))| json!({ "client": c, "nodes": nodes.len(), "class_counts": h }))
        .collect();
    Ok(json!({
        "strategy": cfg.partition,
        "train": plan.split.train.len(),
        "test": plan.split.test.len(),
        "clients": clients,
        "chi_square": chi_square(&hist),
    }))
}

pub fn train(a: TrainArgs) -> Result<Value> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let (g, graph_dir) = match a.synthetic_seed {
        Some(seed) => {
            let g = synthetic_hin(&SyntheticConfig::preset(seed))?;
            let dir = a.out.join("graph");
            write_graph_dir(&g, &dir)?;
            (g, dir)
        }
        None => require_graph(&a.graph)?,
    };
    let graph_dir = std::fs::canonicalize(&graph_dir).unwrap_or(graph_dir);

    let mut manifest = RunManifest::new(&cfg, &g);
    for (key, file) in [
        ("config", "config.json"),
        ("metrics", "metrics.jsonl"),
        ("decisions", "decisions.jsonl"),
        ("checkpoint", "model.ckpt"),
        ("curves", "curves.csv"),
    ] {
        manifest.outputs.insert(key.into(), PathBuf::from(file));
    }
    manifest.outputs.insert("graph".into(), graph_dir);
    std::fs::write(a.out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    manifest.save(&a.out.join("manifest.json"))?;

    let metrics_log = JsonLines::new(BufWriter::new(File::create(a.out.join("metrics.jsonl"))?));
    let result = if a.centralized {
        train_centralized(&cfg, &g).and_then(|out| {
            for m in &out.metrics {
                metrics_log.write(m)?;
            }
            Ok(out)
        })
    } else {
        run_experiment_with(&cfg, &g, |m| metrics_log.write(m))
    };
    metrics_log.into_inner().flush()?;

    let out = match result {
        Ok(out) => out,
        Err(SimError::Diverged {
            round,
            detail,
            checkpoint,
        }) => {
            let path = a.out.join("diverged.ckpt");
            let saved = save_checkpoint(&checkpoint, &path).is_ok();
            let mut fields = serde_json::Map::new();
            fields.insert("round".into(), json!(round));
            if saved {
                fields.insert("checkpoint".into(), json!(path));
            }
            return Err(Detailed {
                kind: "diverged",
                message: format!("training diverged at round {round}: {detail}"),
                fields,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };

    let mut decisions = DecisionLog::new(BufWriter::new(File::create(a.out.join("decisions.jsonl"))?));
    for d in &out.decisions {
        decisions.record(d)?;
    }
    decisions.into_inner().flush()?;
    save_checkpoint(&out.global, &a.out.join("model.ckpt"))?;
    write_curves(&curve_extract(&out.metrics), File::create(a.out.join("curves.csv"))?)?;

    let last = out.metrics.last().expect("round 0 is always measured");
    Ok(json!({
        "run": a.out,
        "rounds": last.round,
        "aggregator": last.aggregator,
        "loss": last.loss,
        "micro_f1": last.micro_f1,
        "macro_f1": last.macro_f1,
        "decisions": out.decisions.len(),
    }))
}

struct LoadedRun {
    config: ExperimentConfig,
    graph: HeterogeneousGraph,
    params: ModelParams,
}

fn load_run(a: &RunArgs) -> Result<LoadedRun> {
    let manifest = RunManifest::load(&a.run.join("manifest.json"))
        .with_context(|| format!("reading manifest in {}", a.run.display()))?;
    let graph_dir = match &a.graph {
        Some(d) => d.clone(),
        None => manifest
            .outputs
            .get("graph")
            .cloned()
            .ok_or_else(|| anyhow!("manifest records no graph; pass --graph"))?,
    };
    let graph = load_graph_at(&graph_dir, &a.target_type)?;
    let fingerprint = dataset_fingerprint(&graph);
    if fingerprint != manifest.dataset_fingerprint {
        let mut fields = serde_json::Map::new();
        fields.insert("expected".into(), json!(manifest.dataset_fingerprint));
        fields.insert("found".into(), json!(fingerprint));
        return Err(Detailed {
            kind: "dataset",
            message: format!("graph in {} is not the one this run trained on", graph_dir.display()),
            fields,
        }
        .into());
    }
    let config = manifest.config;
    let plan_dims = ModelDims {
        embed: config.embed_dim,
        pref: config.pref_dim,
        labels: graph.label_count(),
        targets: graph.target_count(),
        metapaths: config.metapaths.len(),
    };
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| a.run.join("model.ckpt"));
    let params = load_checkpoint(&ckpt, Some(plan_dims)).with_context(|| format!("checkpoint {}", ckpt.display()))?;
    Ok(LoadedRun { config, graph, params })
}

fn eval_options(cfg: &ExperimentConfig) -> ForwardOptions {
    ForwardOptions {
        activation: cfg.activation,
        ..ForwardOptions::default()
    }
}

pub fn eval(a: RunArgs) -> Result<Value> {
    let run = load_run(&a)?;
    let plan = data_plan(&run.config, &run.graph)?;
    let scores = evaluate(&run.params, &plan.adjacency, &plan.labels, &plan.split.test, &eval_options(&run.config))?;
    Ok(serde_json::to_value(scores)?)
}

pub fn export_embeddings(a: ExportArgs) -> Result<Value> {
    let run = load_run(&a.run)?;
    let plan = data_plan(&run.config, &run.graph)?;
    let file = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    let rows = hinfed_core::io::export_embeddings(&run.params, &plan.adjacency, &run.graph, &eval_options(&run.config), file)?;
    Ok(json!({ "out": a.out, "rows": rows, "dim": run.params.dims.embed }))
}

pub fn aggregate_demo(a: AggregateArgs) -> Result<Value> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.records)
        .with_context(|| format!("reading {}", a.records.display()))?;
    let mut records: BTreeMap<usize, (u64, Vec<f64>)> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| row.get(k).ok_or_else(|| anyhow!("line {line}: missing column {k}"));
        let client: usize = field(0)?.parse().with_context(|| format!("line {line}: client"))?;
        let version: u64 = field(1)?.parse().with_context(|| format!("line {line}: version"))?;
        let weights = (2..row.len())
            .map(|k| field(k)?.parse::<f64>().with_context(|| format!("line {line}: weight {}", k - 1)))
            .collect::<Result<Vec<_>>>()?;
        if records.insert(client, (version, weights)).is_some() {
            bail!("line {line}: client {client} listed twice");
        }
    }
    let len = records.values().next().map(|r| r.1.len()).ok_or_else(|| anyhow!("record table is empty"))?;
    if len == 0 {
        bail!("records carry no weights");
    }
    let manifest = ShapeManifest {
        tensors: vec![TensorShape {
            name: "weights".into(),
            rows: 1,
            cols: len,
        }],
    };
    let config = FedConfig {
        aggregator: match a.aggregator {
            DemoAggregator::Feddwa => Aggregator::FedDwa,
            DemoAggregator::Fedavg => Aggregator::FedAvg,
        },
        alpha: a.alpha,
        gap_threshold: a.threshold,
    };
    let mut state = ServerState::new(records.keys().copied(), manifest, config)?;
    for (&id, (version, weights)) in &records {
        state.restore(id, *version, weights.clone())?;
    }
    let uploader = match a.uploader {
        Some(u) if records.contains_key(&u) => u,
        Some(u) => bail!("uploader {u} has no record"),
        None => *state.versions().iter().max_by_key(|(id, v)| (**v, std::cmp::Reverse(**id))).unwrap().0,
    };
    let coefficients = match config.aggregator {
        Aggregator::FedAvg => records.keys().map(|&k| (k, 1.0 / records.len() as f64)).collect(),
        _ => state.feddwa_coefficients()?,
    };
    let aggregated = state.aggregate(uploader)?;
    let decision = state.dispatch(aggregated, uploader);
    Ok(json!({
        "aggregator": config.aggregator.name(),
        "alpha": a.alpha,
        "v_latest": state.latest_version(),
        "versions": state.versions(),
        "staleness_weights": state.staleness_weights(),
        "coefficients": coefficients,
        "aggregate": decision.payload,
        "max_gap": state.max_gap(),
        "gap_threshold": a.threshold,
        "uploader": uploader,
        "dispatch": decision.mode,
    }))
}
