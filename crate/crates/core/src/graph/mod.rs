//! Typed heterogeneous graph, its network schema, and meta-path adjacency.
//!
//! Edges are stored once, in the direction they were declared. Relations the
//! schema marks as symmetric (authorship, co-authorship) are traversed in both
//! directions when typed adjacency is built, so a meta path such as
//! `Author -> Paper -> Author` works without the input listing every reverse
//! edge.

mod load;
mod metapath;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{load_graph, read_schema, write_graph_tables, LoadOptions};
pub use metapath::{
    metapath_adjacency, neighbors_along, AdjacencyMode, MetaPathAdjacency,
    MetaPathSpec, SparseCounts, TypeAlphabet,
};

/// Name of a node type, e.g. `Author`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeType(pub String);

impl NodeType {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Name of a relation type, e.g. `write`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation(pub String);

impl Relation {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("edge {src} -[{relation}]-> {dst} violates schema: ({src_type}, {relation}, {dst_type}) is not declared")]
    SchemaViolation {
        src: usize,
        dst: usize,
        relation: String,
        src_type: String,
        dst_type: String,
    },
    #[error("edge references unknown node {0}")]
    UnknownNode(usize),
    #[error("node ids must be dense 0..{expected}, found id {found}")]
    NonDenseIds { expected: usize, found: usize },
    #[error("node {node} of type {node_type} carries a label, but only {target} nodes may")]
    LabelOnNonTarget {
        node: usize,
        node_type: String,
        target: String,
    },
    #[error("meta path {name}: no node of type {node_type} in the graph")]
    EmptyType { name: String, node_type: String },
    #[error("meta path {name}: step {from} -> {to} has no schema relation")]
    InvalidMetaPath { name: String, from: String, to: String },
    #[error("meta path {name} must start and end with target type {target}")]
    MetaPathEndpoints { name: String, target: String },
    #[error("meta path {0:?}: unknown type initial")]
    UnknownInitial(String),
    #[error("meta path {0:?} needs at least two types")]
    MetaPathTooShort(String),
    #[error("node index {index} out of range (have {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("io: {0}")]
    Io(String),
}

/// A `(src_type, relation, dst_type)` triple of the network schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SchemaTriple {
    pub src_type: NodeType,
    pub relation: Relation,
    pub dst_type: NodeType,
}

impl SchemaTriple {
    pub fn new(src: &str, relation: &str, dst: &str) -> Self {
        Self {
            src_type: NodeType::new(src),
            relation: Relation::new(relation),
            dst_type: NodeType::new(dst),
        }
    }
}

/// Network schema: allowed typed relations plus the set of relations that are
/// traversed in both directions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    triples: BTreeSet<SchemaTriple>,
    symmetric: BTreeSet<Relation>,
}

impl Schema {
    pub fn new(triples: impl IntoIterator<Item = SchemaTriple>) -> Self {
        Self {
            triples: triples.into_iter().collect(),
            symmetric: BTreeSet::new(),
        }
    }

    pub fn with_symmetric<'a>(mut self, relations: impl IntoIterator<Item = &'a str>) -> Self {
        self.symmetric
            .extend(relations.into_iter().map(Relation::new));
        self
    }

    pub fn triples(&self) -> impl Iterator<Item = &SchemaTriple> {
        self.triples.iter()
    }

    pub fn is_symmetric(&self, relation: &Relation) -> bool {
        self.symmetric.contains(relation)
    }

    pub fn symmetric_relations(&self) -> impl Iterator<Item = &Relation> {
        self.symmetric.iter()
    }

    pub fn allows(&self, src: &NodeType, relation: &Relation, dst: &NodeType) -> bool {
        self.triples.iter().any(|t| {
            &t.relation == relation
                && ((&t.src_type == src && &t.dst_type == dst)
                    || (self.is_symmetric(relation) && &t.src_type == dst && &t.dst_type == src))
        })
    }

    /// True when some relation leads from `from`-typed nodes to `to`-typed
    /// nodes, honouring symmetric relations in reverse.
    pub fn connects(&self, from: &NodeType, to: &NodeType) -> bool {
        self.triples.iter().any(|t| {
            (&t.src_type == from && &t.dst_type == to)
                || (self.is_symmetric(&t.relation) && &t.src_type == to && &t.dst_type == from)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub node_type: NodeType,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: Relation,
}

/// A validated heterogeneous information network.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    schema: Schema,
    target_type: NodeType,
    /// global node id -> index among target-type nodes
    target_index: Vec<Option<usize>>,
    target_nodes: Vec<usize>,
}

impl HeterogeneousGraph {
    /// Validates and assembles a graph. Node ids must be dense `0..N` (in any
    /// order); edges must match the schema; labels may only sit on target
    /// nodes.
    pub fn new(
        mut nodes: Vec<Node>,
        edges: Vec<Edge>,
        schema: Schema,
        target_type: NodeType,
    ) -> Result<Self, GraphError> {
        nodes.sort_by_key(|n| n.id);
        for (expected, node) in nodes.iter().enumerate() {
            if node.id != expected {
                return Err(GraphError::NonDenseIds {
                    expected: nodes.len(),
                    found: node.id,
                });
            }
            if node.label.is_some() && node.node_type != target_type {
                return Err(GraphError::LabelOnNonTarget {
                    node: node.id,
                    node_type: node.node_type.0.clone(),
                    target: target_type.0.clone(),
                });
            }
        }
        for edge in &edges {
            let src = nodes.get(edge.src).ok_or(GraphError::UnknownNode(edge.src))?;
            let dst = nodes.get(edge.dst).ok_or(GraphError::UnknownNode(edge.dst))?;
            if !schema.allows(&src.node_type, &edge.relation, &dst.node_type) {
                return Err(GraphError::SchemaViolation {
                    src: edge.src,
                    dst: edge.dst,
                    relation: edge.relation.0.clone(),
                    src_type: src.node_type.0.clone(),
                    dst_type: dst.node_type.0.clone(),
                });
            }
        }
        let mut target_index = vec![None; nodes.len()];
        let mut target_nodes = Vec::new();
        for node in &nodes {
            if node.node_type == target_type {
                target_index[node.id] = Some(target_nodes.len());
                target_nodes.push(node.id);
            }
        }
        Ok(Self {
            nodes,
            edges,
            schema,
            target_type,
            target_index,
            target_nodes,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn target_type(&self) -> &NodeType {
        &self.target_type
    }

    /// Number of target-type nodes (`N_t`).
    pub fn target_count(&self) -> usize {
        self.target_nodes.len()
    }

    /// Global ids of target nodes, ordered by target index.
    pub fn target_nodes(&self) -> &[usize] {
        &self.target_nodes
    }

    pub fn target_index(&self, node_id: usize) -> Option<usize> {
        self.target_index.get(node_id).copied().flatten()
    }

    /// Label of the target node at target index `t`.
    pub fn target_label(&self, t: usize) -> Option<usize> {
        self.target_nodes
            .get(t)
            .and_then(|&id| self.nodes[id].label)
    }

    /// Target indices of all labeled target nodes, ascending.
    pub fn labeled_targets(&self) -> Vec<usize> {
        (0..self.target_count())
            .filter(|&t| self.target_label(t).is_some())
            .collect()
    }

    /// One past the largest label present.
    pub fn label_count(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| n.label)
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Nodes of the given type, ascending by id.
    pub fn nodes_of_type(&self, node_type: &NodeType) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| &n.node_type == node_type)
            .map(|n| n.id)
            .collect()
    }

    pub fn type_counts(&self) -> BTreeMap<NodeType, usize> {
        let mut counts = BTreeMap::new();
        for n in &self.nodes {
            *counts.entry(n.node_type.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Typed biadjacency from `from`-typed to `to`-typed nodes, as
    /// `(row positions over from-nodes) x (positions over to-nodes)` counts.
    /// Parallel edges add up; symmetric relations contribute both directions.
    pub fn biadjacency(&self, from: &NodeType, to: &NodeType) -> SparseCounts {
        let rows = self.nodes_of_type(from);
        let cols = self.nodes_of_type(to);
        let mut row_pos = vec![usize::MAX; self.nodes.len()];
        for (p, &id) in rows.iter().enumerate() {
            row_pos[id] = p;
        }
        let mut col_pos = vec![usize::MAX; self.nodes.len()];
        for (p, &id) in cols.iter().enumerate() {
            col_pos[id] = p;
        }
        let mut entries = Vec::new();
        for e in &self.edges {
            let (st, dt) = (&self.nodes[e.src].node_type, &self.nodes[e.dst].node_type);
            if st == from && dt == to {
                entries.push((row_pos[e.src], col_pos[e.dst], 1));
            }
            if self.schema.is_symmetric(&e.relation)
                && e.src != e.dst
                && dt == from
                && st == to
            {
                entries.push((row_pos[e.dst], col_pos[e.src], 1));
            }
        }
        SparseCounts::from_triplets(rows.len(), cols.len(), entries)
    }
}
