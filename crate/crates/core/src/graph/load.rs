//! Delimited-text tables: `id,type,label` for nodes, `src,dst,relation` for
//! edges and `src_type,relation,dst_type,symmetric` for the schema.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Edge, GraphError, HeterogeneousGraph, Node, NodeType, Relation, Schema, SchemaTriple};

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub target_type: NodeType,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            target_type: NodeType::new("Author"),
        }
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}

fn parse_err(record: &csv::StringRecord, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line: record.position().map_or(0, |p| p.line()),
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> GraphError {
    let line = e.position().map_or(0, |p| p.line());
    GraphError::Parse {
        line,
        message: e.to_string(),
    }
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, name: &str) -> Result<&'r str, GraphError> {
    record
        .get(idx)
        .ok_or_else(|| parse_err(record, format!("missing column {name}")))
}

fn parse_usize(record: &csv::StringRecord, idx: usize, name: &str) -> Result<usize, GraphError> {
    let raw = field(record, idx, name)?;
    raw.parse()
        .map_err(|_| parse_err(record, format!("{name}: expected a nonnegative integer, got {raw:?}")))
}

/// Reads node and edge tables and validates them against `schema`.
pub fn load_graph<N: Read, E: Read>(
    nodes: N,
    edges: E,
    schema: Schema,
    options: &LoadOptions,
) -> Result<HeterogeneousGraph, GraphError> {
    let mut node_list = Vec::new();
    for rec in reader(nodes).records() {
        let rec = rec.map_err(csv_err)?;
        let id = parse_usize(&rec, 0, "id")?;
        let node_type = field(&rec, 1, "type")?;
        if node_type.is_empty() {
            return Err(parse_err(&rec, "type: empty"));
        }
        let raw_label = field(&rec, 2, "label")?;
        let label = if raw_label.is_empty() {
            None
        } else {
            Some(parse_usize(&rec, 2, "label")?)
        };
        node_list.push(Node {
            id,
            node_type: NodeType::new(node_type),
            label,
        });
    }
    let mut edge_list = Vec::new();
    for rec in reader(edges).records() {
        let rec = rec.map_err(csv_err)?;
        let src = parse_usize(&rec, 0, "src")?;
        let dst = parse_usize(&rec, 1, "dst")?;
        let relation = field(&rec, 2, "relation")?;
        if relation.is_empty() {
            return Err(parse_err(&rec, "relation: empty"));
        }
        edge_list.push(Edge {
            src,
            dst,
            relation: Relation::new(relation),
        });
    }
    HeterogeneousGraph::new(node_list, edge_list, schema, options.target_type.clone())
}

/// Reads a schema table. The `symmetric` column is optional per row
/// (`true`/`false`, empty meaning false).
pub fn read_schema<R: Read>(input: R) -> Result<Schema, GraphError> {
    let mut triples = Vec::new();
    let mut symmetric = Vec::new();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let triple = SchemaTriple::new(
            field(&rec, 0, "src_type")?,
            field(&rec, 1, "relation")?,
            field(&rec, 2, "dst_type")?,
        );
        match rec.get(3).unwrap_or("") {
            "" | "false" => {}
            "true" => symmetric.push(triple.relation.0.clone()),
            other => return Err(parse_err(&rec, format!("symmetric: expected true/false, got {other:?}"))),
        }
        triples.push(triple);
    }
    Ok(Schema::new(triples).with_symmetric(symmetric.iter().map(String::as_str)))
}

/// Writes `nodes.csv`, `edges.csv` and `schema.csv` into `dir`.
pub fn write_graph_tables(graph: &HeterogeneousGraph, dir: &Path) -> Result<(), GraphError> {
    let io = |e: std::io::Error| GraphError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;

    let mut w = std::io::BufWriter::new(File::create(dir.join("nodes.csv")).map_err(io)?);
    writeln!(w, "id,type,label").map_err(io)?;
    for n in graph.nodes() {
        let label = n.label.map(|l| l.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", n.id, n.node_type, label).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut w = std::io::BufWriter::new(File::create(dir.join("edges.csv")).map_err(io)?);
    writeln!(w, "src,dst,relation").map_err(io)?;
    for e in graph.edges() {
        writeln!(w, "{},{},{}", e.src, e.dst, e.relation).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut w = std::io::BufWriter::new(File::create(dir.join("schema.csv")).map_err(io)?);
    writeln!(w, "src_type,relation,dst_type,symmetric").map_err(io)?;
    for t in graph.schema().triples() {
        writeln!(
            w,
            "{},{},{},{}",
            t.src_type,
            t.relation,
            t.dst_type,
            graph.schema().is_symmetric(&t.relation)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
