//! Test-only oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use hinfed_core::graph::{
    metapath_adjacency, AdjacencyMode, Edge, HeterogeneousGraph, MetaPathAdjacency, MetaPathSpec,
    Node, NodeType, Relation, Schema, SchemaTriple, TypeAlphabet,
};
use hinfed_core::model::{backward, loss, ForwardOptions, ModelDims, ModelParams};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn academic_schema() -> Schema {
    Schema::new([
        SchemaTriple::new("Author", "write", "Paper"),
        SchemaTriple::new("Paper", "publish", "Venue"),
        SchemaTriple::new("Paper", "cite", "Paper"),
    ])
    .with_symmetric(["write", "publish"])
}

/// Random academic HIN with `n` nodes (authors, papers, venues), labels on
/// authors, random write/publish/cite edges including parallel ones.
pub fn random_hin(seed: u64, n: usize, labels: usize) -> HeterogeneousGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = ["Author", "Paper", "Venue"];
    let mut nodes = Vec::with_capacity(n);
    for id in 0..n {
        // guarantee at least one of each of the first three types
        let k = if id < 3 { id } else { rng.random_range(0..3) };
        let node_type = NodeType::new(kinds[k]);
        let label = (k == 0).then(|| rng.random_range(0..labels));
        nodes.push(Node {
            id,
            node_type,
            label,
        });
    }
    let of = |t: &str| -> Vec<usize> {
        nodes
            .iter()
            .filter(|x| x.node_type.as_str() == t)
            .map(|x| x.id)
            .collect()
    };
    let (authors, papers, venues) = (of("Author"), of("Paper"), of("Venue"));
    let mut edges = Vec::new();
    let n_edges = rng.random_range(n..3 * n);
    for _ in 0..n_edges {
        let pick = |rng: &mut ChaCha8Rng, v: &[usize]| v[rng.random_range(0..v.len())];
        match rng.random_range(0..3) {
            0 => edges.push(Edge {
                src: pick(&mut rng, &authors),
                dst: pick(&mut rng, &papers),
                relation: Relation::new("write"),
            }),
            1 => edges.push(Edge {
                src: pick(&mut rng, &papers),
                dst: pick(&mut rng, &venues),
                relation: Relation::new("publish"),
            }),
            _ => edges.push(Edge {
                src: pick(&mut rng, &papers),
                dst: pick(&mut rng, &papers),
                relation: Relation::new("cite"),
            }),
        }
    }
    HeterogeneousGraph::new(nodes, edges, academic_schema(), NodeType::new("Author")).unwrap()
}

/// Exhaustive depth-first enumeration of typed walks along `spec`, scanning
/// the raw edge list at every step. Dense `N_start x N_end` counts, diagonal
/// included.
pub fn enumerate_paths(graph: &HeterogeneousGraph, spec: &MetaPathSpec) -> Vec<Vec<u64>> {
    let starts = graph.nodes_of_type(&spec.type_sequence[0]);
    let ends = graph.nodes_of_type(spec.type_sequence.last().unwrap());
    let end_pos: BTreeMap<usize, usize> = ends.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    let mut table = vec![vec![0u64; ends.len()]; starts.len()];

    fn walk(g: &HeterogeneousGraph, types: &[NodeType], at: usize, depth: usize, out: &mut Vec<usize>) {
        if depth + 1 == types.len() {
            out.push(at);
            return;
        }
        let want = &types[depth + 1];
        for e in g.edges() {
            if e.src == at && &g.nodes()[e.dst].node_type == want {
                walk(g, types, e.dst, depth + 1, out);
            }
            if g.schema().is_symmetric(&e.relation)
                && e.dst == at
                && e.src != e.dst
                && &g.nodes()[e.src].node_type == want
            {
                walk(g, types, e.src, depth + 1, out);
            }
        }
    }

    for (r, &s) in starts.iter().enumerate() {
        let mut hits = Vec::new();
        walk(graph, &spec.type_sequence, s, 0, &mut hits);
        for end in hits {
            table[r][end_pos[&end]] += 1;
        }
    }
    table
}

pub fn spec(name: &str) -> MetaPathSpec {
    MetaPathSpec::parse(name, &TypeAlphabet::default()).unwrap()
}

pub fn adjacencies(g: &HeterogeneousGraph, names: &[&str]) -> Vec<MetaPathAdjacency> {
    names
        .iter()
        .map(|n| metapath_adjacency(g, &spec(n), AdjacencyMode::Counts).unwrap())
        .collect()
}

pub fn labels_of(g: &HeterogeneousGraph) -> Vec<Option<usize>> {
    (0..g.target_count()).map(|t| g.target_label(t)).collect()
}

pub fn small_model(g: &HeterogeneousGraph, metapaths: usize, labels: usize, seed: u64) -> ModelParams {
    let dims = ModelDims {
        embed: 6,
        pref: 4,
        labels,
        targets: g.target_count(),
        metapaths,
    };
    ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Central finite difference of `f` at coordinate `flat` of tensor `tensor`.
pub fn central_difference(
    params: &ModelParams,
    tensor: usize,
    flat: usize,
    h: f64,
    f: &dyn Fn(&ModelParams) -> f64,
) -> f64 {
    let mut plus = params.clone();
    let mut minus = params.clone();
    *plus.tensors_mut()[tensor].iter_mut().nth(flat).unwrap() += h;
    *minus.tensors_mut()[tensor].iter_mut().nth(flat).unwrap() -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Relative error with a floor so that two near-zero values compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-8 {
        (analytic - numeric).abs() / 1e-8
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Worst relative error over `per_tensor` coordinates of every tensor; half
/// the coordinates are drawn where the analytic gradient is nonzero.
pub fn worst_error(
    params: &ModelParams,
    adj: &[MetaPathAdjacency],
    batch: &[usize],
    labels: &[Option<usize>],
    opts: &ForwardOptions,
    per_tensor: usize,
    seed: u64,
) -> (f64, String) {
    let (_, trace) = loss(params, adj, batch, labels, opts).unwrap();
    let grads = backward(params, adj, &trace).unwrap();
    let f = |p: &ModelParams| loss(p, adj, batch, labels, opts).unwrap().0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0, String::new());
    for (t, (name, g)) in grads.tensor_names().into_iter().zip(grads.tensors()).enumerate() {
        let flat: Vec<f64> = g.iter().copied().collect();
        let nonzero: Vec<usize> = (0..flat.len()).filter(|&k| flat[k] != 0.0).collect();
        let mut coords: Vec<usize> = index::sample(&mut rng, flat.len(), (per_tensor / 2).min(flat.len())).into_vec();
        if !nonzero.is_empty() {
            let take = (per_tensor - coords.len()).min(nonzero.len());
            coords.extend(index::sample(&mut rng, nonzero.len(), take).into_iter().map(|k| nonzero[k]));
        }
        for k in coords {
            let numeric = central_difference(params, t, k, FD_STEP, &f);
            let err = relative_error(flat[k], numeric);
            if err > worst.0 {
                worst = (err, format!("{name}[{k}]: analytic {} numeric {numeric}", flat[k]));
            }
        }
    }
    worst
}
