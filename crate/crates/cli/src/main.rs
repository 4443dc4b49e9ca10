//! `hinfed` command-line driver.

mod commands;
mod errors;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "hinfed", version, about = "Federated heterogeneous-graph embedding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic author/paper/venue graph as CSV tables
    Generate(GenerateArgs),
    /// Show how a config splits the labelled nodes across clients
    Partition(PartitionArgs),
    /// Run an experiment into a run directory
    Train(TrainArgs),
    /// Score a run's checkpoint on its test split
    Eval(RunArgs),
    /// Write target-node embeddings of a run's checkpoint as CSV
    ExportEmbeddings(ExportArgs),
    /// Replay one aggregation step on a table of client records
    AggregateDemo(AggregateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// output directory for nodes.csv, edges.csv and schema.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    authors: Option<usize>,
    #[arg(long)]
    papers: Option<usize>,
    #[arg(long)]
    venues: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    citations: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    /// graph directory (nodes.csv, edges.csv, schema.csv)
    #[arg(long)]
    graph: Option<PathBuf>,
    /// node type that carries labels
    #[arg(long, default_value = "Author")]
    target_type: String,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Strategy {
    Uniform,
    LabelSkewed,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// JSON experiment config; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    #[arg(long)]
    concentration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// also write `node_id,client` rows here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// generate the synthetic preset with this seed instead of reading --graph
    #[arg(long, conflicts_with = "graph")]
    synthetic_seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// run directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u64>,
    /// single model on the whole training split
    #[arg(long)]
    centralized: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// run directory written by `train`
    #[arg(long)]
    run: PathBuf,
    /// graph directory; defaults to the one recorded in the run manifest
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value = "Author")]
    target_type: String,
    /// checkpoint file; defaults to the run's model.ckpt
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum DemoAggregator {
    Feddwa,
    Fedavg,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    /// CSV with columns `client,version,w1..wn`
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    threshold: u64,
    /// client whose upload triggered the step; defaults to the freshest
    #[arg(long)]
    uploader: Option<usize>,
    #[arg(long, value_enum, default_value = "feddwa")]
    aggregator: DemoAggregator,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            errors::report("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Partition(a) => commands::partition(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
        Command::AggregateDemo(a) => commands::aggregate_demo(a),
    };
    match result {
        Ok(value) => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let text = serde_json::to_string_pretty(&value).expect("serializable output");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            errors::report_error(&e);
            ExitCode::FAILURE
        }
    }
}
