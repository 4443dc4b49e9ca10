use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{GraphError, HeterogeneousGraph, NodeType, Schema};

/// Compressed sparse row matrix of nonnegative integer counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCounts {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<u64>,
}

impl SparseCounts {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, count)` triplets; duplicates are summed and
    /// zero counts dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Self {
        let mut per_row: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r},{c}) outside {rows}x{cols}");
            *per_row[r].entry(c).or_insert(0) += v;
        }
        let mut out = Self::zeros(rows, cols);
        for (r, row) in per_row.into_iter().enumerate() {
            for (c, v) in row {
                if v > 0 {
                    out.indices.push(c);
                    out.values.push(v);
                }
            }
            out.indptr[r + 1] = out.indices.len();
        }
        out
    }

    pub fn from_dense(dense: &[Vec<u64>]) -> Self {
        let rows = dense.len();
        let cols = dense.first().map_or(0, Vec::len);
        Self::from_triplets(
            rows,
            cols,
            dense.iter().enumerate().flat_map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0)
                    .map(move |(c, &v)| (r, c, v))
            }),
        )
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices (ascending) and counts of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[u64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        let (idx, vals) = self.row(r);
        idx.binary_search(&c).map_or(0, |p| vals[p])
    }

    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        let mut out = vec![vec![0; self.cols]; self.rows];
        for (r, row) in out.iter_mut().enumerate() {
            let (idx, vals) = self.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &SparseCounts) -> SparseCounts {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, rhs.cols);
        let mut acc = vec![0u64; rhs.cols];
        let mut touched = Vec::new();
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            for (&k, &a) in idx.iter().zip(vals) {
                let (ridx, rvals) = rhs.row(k);
                for (&c, &b) in ridx.iter().zip(rvals) {
                    if acc[c] == 0 {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                out.indices.push(c);
                out.values.push(acc[c]);
                acc[c] = 0;
            }
            touched.clear();
            out.indptr[r + 1] = out.indices.len();
        }
        out
    }

    fn filter_map(&self, mut f: impl FnMut(usize, usize, u64) -> u64) -> SparseCounts {
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                let nv = f(r, c, v);
                if nv > 0 {
                    out.indices.push(c);
                    out.values.push(nv);
                }
            }
            out.indptr[r + 1] = out.indices.len();
        }
        out
    }

    pub fn without_diagonal(&self) -> SparseCounts {
        self.filter_map(|r, c, v| if r == c { 0 } else { v })
    }

    pub fn indicator(&self) -> SparseCounts {
        self.filter_map(|_, _, _| 1)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| {
                let (idx, vals) = self.row(r);
                idx.iter().zip(vals).all(|(&c, &v)| self.get(c, r) == v)
            })
    }
}

/// Maps single-letter initials to node types, e.g. `A -> Author`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeAlphabet(pub BTreeMap<char, NodeType>);

impl Default for TypeAlphabet {
    fn default() -> Self {
        Self(
            [('A', "Author"), ('P', "Paper"), ('V', "Venue"), ('T', "Term")]
                .into_iter()
                .map(|(c, n)| (c, NodeType::new(n)))
                .collect(),
        )
    }
}

/// A meta path: an ordered sequence of node types on the schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPathSpec {
    pub name: String,
    pub type_sequence: Vec<NodeType>,
}

impl MetaPathSpec {
    /// Resolves a string of type initials such as `"APVPA"`.
    pub fn parse(initials: &str, alphabet: &TypeAlphabet) -> Result<Self, GraphError> {
        let type_sequence = initials
            .chars()
            .map(|c| {
                alphabet
                    .0
                    .get(&c)
                    .cloned()
                    .ok_or_else(|| GraphError::UnknownInitial(initials.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if type_sequence.len() < 2 {
            return Err(GraphError::MetaPathTooShort(initials.to_string()));
        }
        Ok(Self {
            name: initials.to_string(),
            type_sequence,
        })
    }

    pub fn len(&self) -> usize {
        self.type_sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.type_sequence.is_empty()
    }

    /// Checks every step against the schema and, if `target` is given, that
    /// the path starts and ends on it.
    pub fn validate(&self, schema: &Schema, target: Option<&NodeType>) -> Result<(), GraphError> {
        if self.type_sequence.len() < 2 {
            return Err(GraphError::MetaPathTooShort(self.name.clone()));
        }
        for w in self.type_sequence.windows(2) {
            if !schema.connects(&w[0], &w[1]) {
                return Err(GraphError::InvalidMetaPath {
                    name: self.name.clone(),
                    from: w[0].0.clone(),
                    to: w[1].0.clone(),
                });
            }
        }
        if let Some(t) = target {
            if self.type_sequence.first() != Some(t) || self.type_sequence.last() != Some(t) {
                return Err(GraphError::MetaPathEndpoints {
                    name: self.name.clone(),
                    target: t.0.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// Number of path instances between the endpoints.
    #[default]
    Counts,
    /// 1 where at least one path instance exists.
    Binary,
}

/// Meta-path based adjacency between endpoint-typed nodes. Row `i` is the
/// adjacency vector of node `i`; the diagonal is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathAdjacency {
    pub metapath: MetaPathSpec,
    pub matrix: SparseCounts,
    pub mode: AdjacencyMode,
}

impl MetaPathAdjacency {
    pub fn size(&self) -> usize {
        self.matrix.shape().0
    }

    pub fn row(&self, i: usize) -> (&[usize], &[u64]) {
        self.matrix.row(i)
    }
}

/// Counts path instances along `spec` as the ordered product of typed
/// biadjacency matrices. Rows and columns index endpoint-typed nodes in
/// ascending id order (for the target type this is the target index).
///
/// A missing intermediate type simply yields a zero matrix; a missing
/// endpoint type is an error since the matrix would have no rows.
pub fn metapath_adjacency(
    graph: &HeterogeneousGraph,
    spec: &MetaPathSpec,
    mode: AdjacencyMode,
) -> Result<MetaPathAdjacency, GraphError> {
    spec.validate(graph.schema(), None)?;
    let counts = graph.type_counts();
    for endpoint in [&spec.type_sequence[0], &spec.type_sequence[spec.len() - 1]] {
        if counts.get(endpoint).copied().unwrap_or(0) == 0 {
            return Err(GraphError::EmptyType {
                name: spec.name.clone(),
                node_type: endpoint.0.clone(),
            });
        }
    }
    let mut product = graph.biadjacency(&spec.type_sequence[0], &spec.type_sequence[1]);
    for w in spec.type_sequence[1..].windows(2) {
        product = product.matmul(&graph.biadjacency(&w[0], &w[1]));
    }
    // self-pairs only exist when both ends share a node type
    let mut matrix = if spec.type_sequence.first() == spec.type_sequence.last() {
        product.without_diagonal()
    } else {
        product
    };
    if mode == AdjacencyMode::Binary {
        matrix = matrix.indicator();
    }
    Ok(MetaPathAdjacency {
        metapath: spec.clone(),
        matrix,
        mode,
    })
}

/// Meta-path neighbours of node `i`: the support of row `i`. A node is never
/// its own neighbour.
pub fn neighbors_along(adj: &MetaPathAdjacency, i: usize) -> Result<BTreeSet<usize>, GraphError> {
    let n = adj.size();
    if i >= n {
        return Err(GraphError::IndexOutOfRange { index: i, len: n });
    }
    Ok(adj.row(i).0.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node, Relation, SchemaTriple};

    fn node(id: usize, t: &str) -> Node {
        Node {
            id,
            node_type: NodeType::new(t),
            label: None,
        }
    }

    fn edge(src: usize, dst: usize, r: &str) -> Edge {
        Edge {
            src,
            dst,
            relation: Relation::new(r),
        }
    }

    fn academic_schema() -> Schema {
        Schema::new([
            SchemaTriple::new("Author", "write", "Paper"),
            SchemaTriple::new("Paper", "publish", "Venue"),
            SchemaTriple::new("Paper", "cite", "Paper"),
        ])
        .with_symmetric(["write", "publish"])
    }

    /// a1, a2 both write p1.
    fn toy_apa() -> HeterogeneousGraph {
        HeterogeneousGraph::new(
            vec![node(0, "Author"), node(1, "Author"), node(2, "Paper")],
            vec![edge(0, 2, "write"), edge(1, 2, "write")],
            academic_schema(),
            NodeType::new("Author"),
        )
        .unwrap()
    }

    fn apa() -> MetaPathSpec {
        MetaPathSpec::parse("APA", &TypeAlphabet::default()).unwrap()
    }

    #[test]
    fn co_authors_are_apa_neighbours() {
        let g = toy_apa();
        let adj = metapath_adjacency(&g, &apa(), AdjacencyMode::Counts).unwrap();
        assert_eq!(adj.matrix.get(0, 1), 1);
        assert_eq!(adj.matrix.get(0, 0), 0);
        assert_eq!(neighbors_along(&adj, 0).unwrap(), BTreeSet::from([1]));
    }

    #[test]
    fn no_papers_means_zero_matrix() {
        let g = HeterogeneousGraph::new(
            vec![node(0, "Author"), node(1, "Author")],
            vec![],
            academic_schema(),
            NodeType::new("Author"),
        )
        .unwrap();
        let adj = metapath_adjacency(&g, &apa(), AdjacencyMode::Counts).unwrap();
        assert_eq!(adj.matrix.nnz(), 0);
        assert_eq!(adj.size(), 2);
    }

    #[test]
    fn missing_endpoint_type_is_an_error() {
        let g = HeterogeneousGraph::new(
            vec![node(0, "Paper")],
            vec![],
            academic_schema(),
            NodeType::new("Author"),
        )
        .unwrap();
        assert!(matches!(
            metapath_adjacency(&g, &apa(), AdjacencyMode::Counts),
            Err(GraphError::EmptyType { .. })
        ));
    }

    #[test]
    fn path_off_schema_is_rejected() {
        let spec = MetaPathSpec::parse("AVA", &TypeAlphabet::default()).unwrap();
        assert!(matches!(
            metapath_adjacency(&toy_apa(), &spec, AdjacencyMode::Counts),
            Err(GraphError::InvalidMetaPath { .. })
        ));
        assert!(MetaPathSpec::parse("AXA", &TypeAlphabet::default()).is_err());
        assert!(MetaPathSpec::parse("A", &TypeAlphabet::default()).is_err());
        let pap = MetaPathSpec::parse("PAP", &TypeAlphabet::default()).unwrap();
        assert!(matches!(
            pap.validate(&academic_schema(), Some(&NodeType::new("Author"))),
            Err(GraphError::MetaPathEndpoints { .. })
        ));
    }

    #[test]
    fn support_of_a_row() {
        let m = SparseCounts::from_dense(&[vec![0, 0, 0, 0], vec![0, 1, 0, 2]]);
        let adj = MetaPathAdjacency {
            metapath: apa(),
            matrix: m,
            mode: AdjacencyMode::Counts,
        };
        assert_eq!(neighbors_along(&adj, 1).unwrap(), BTreeSet::from([1, 3]));
        assert!(neighbors_along(&adj, 0).unwrap().is_empty());
        assert!(matches!(
            neighbors_along(&adj, 7),
            Err(GraphError::IndexOutOfRange { index: 7, len: 2 })
        ));
    }

    #[test]
    fn length_two_path_is_the_biadjacency() {
        let g = toy_apa();
        let ap = MetaPathSpec::parse("AP", &TypeAlphabet::default()).unwrap();
        let adj = metapath_adjacency(&g, &ap, AdjacencyMode::Counts).unwrap();
        let direct = g.biadjacency(&NodeType::new("Author"), &NodeType::new("Paper"));
        assert_eq!(adj.matrix, direct);
    }

    #[test]
    fn binary_mode_is_indicator_of_counts() {
        // a0 and a1 co-write two papers
        let g = HeterogeneousGraph::new(
            vec![
                node(0, "Author"),
                node(1, "Author"),
                node(2, "Paper"),
                node(3, "Paper"),
            ],
            vec![
                edge(0, 2, "write"),
                edge(1, 2, "write"),
                edge(0, 3, "write"),
                edge(1, 3, "write"),
            ],
            academic_schema(),
            NodeType::new("Author"),
        )
        .unwrap();
        let counts = metapath_adjacency(&g, &apa(), AdjacencyMode::Counts).unwrap();
        let binary = metapath_adjacency(&g, &apa(), AdjacencyMode::Binary).unwrap();
        assert_eq!(counts.matrix.get(0, 1), 2);
        assert_eq!(binary.matrix.get(0, 1), 1);
        assert_eq!(binary.matrix, counts.matrix.indicator());
        assert!(counts.matrix.is_symmetric());
    }

    #[test]
    fn sparse_product_matches_dense() {
        let a = SparseCounts::from_dense(&[vec![1, 0, 2], vec![0, 3, 0]]);
        let b = SparseCounts::from_dense(&[vec![1, 1], vec![0, 2], vec![4, 0]]);
        assert_eq!(a.matmul(&b).to_dense(), vec![vec![9, 1], vec![0, 6]]);
    }
}
