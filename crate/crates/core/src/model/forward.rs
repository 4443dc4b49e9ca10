use ndarray::{concatenate, Array1, Array2, Axis};

use super::layers::{cosine, softmax, Activation, NeighborSampling};
use super::{ModelError, ModelParams};
use crate::graph::MetaPathAdjacency;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub activation: Activation,
    pub sampling: NeighborSampling,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            activation: Activation::Elu,
            sampling: NeighborSampling::ALL,
        }
    }
}

/// Intermediate values of one node under one meta path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    /// sampled meta-path neighbours, ascending
    pub neighbors: Vec<usize>,
    pub similarities: Vec<f64>,
    /// node-level attention, renormalised over `neighbors`
    pub coeffs: Vec<f64>,
    pub pre_activation: Array1<f64>,
    pub aggregated: Array1<f64>,
    pub embedding: Array1<f64>,
    /// embedding projected into preference space
    pub projected: Array1<f64>,
    /// cosine of preference vector and `projected`
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub node: usize,
    pub label: Option<usize>,
    pub paths: Vec<PathTrace>,
    /// meta-path level attention
    pub path_coeffs: Vec<f64>,
    pub fused: Array1<f64>,
    pub probs: Array1<f64>,
    /// cross-entropy of this node, 0 when unlabeled
    pub loss: f64,
}

/// Everything the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// per meta path, `N_t x d` structural features (row `j` is `W_t A_j`)
    pub features: Vec<Array2<f64>>,
    pub nodes: Vec<NodeTrace>,
    /// summed cross-entropy over labeled nodes
    pub loss: f64,
    /// how many cosines hit a zero-norm vector
    pub degenerate_cosines: usize,
    pub activation: Activation,
}

fn check_inputs(params: &ModelParams, adjacency: &[MetaPathAdjacency]) -> Result<(), ModelError> {
    let dims = params.dims;
    if adjacency.len() != dims.metapaths {
        return Err(ModelError::Shape(format!(
            "{} adjacency matrices for {} meta paths",
            adjacency.len(),
            dims.metapaths
        )));
    }
    for (m, adj) in adjacency.iter().enumerate() {
        if adj.size() != dims.targets || params.transform[m].ncols() != dims.targets {
            return Err(ModelError::Shape(format!(
                "meta path {m}: adjacency has {} nodes, model expects {}",
                adj.size(),
                dims.targets
            )));
        }
    }
    Ok(())
}

/// All structural features for one meta path, `N_t x d`.
pub fn structural_features(params: &ModelParams, adj: &MetaPathAdjacency, metapath: usize) -> Array2<f64> {
    let w = &params.transform[metapath];
    let mut out = Array2::zeros((adj.size(), w.nrows()));
    for (j, mut row) in out.rows_mut().into_iter().enumerate() {
        let (cols, counts) = adj.row(j);
        for (&c, &v) in cols.iter().zip(counts) {
            row.scaled_add(v as f64, &w.column(c));
        }
    }
    out
}

/// Runs both attention levels and the classifier for `nodes`. With `labels`
/// given, labeled nodes contribute cross-entropy to `loss`.
pub fn forward(
    params: &ModelParams,
    adjacency: &[MetaPathAdjacency],
    nodes: &[usize],
    labels: Option<&[Option<usize>]>,
    opts: &ForwardOptions,
) -> Result<ForwardTrace, ModelError> {
    check_inputs(params, adjacency)?;
    let dims = params.dims;
    let features: Vec<Array2<f64>> = adjacency
        .iter()
        .enumerate()
        .map(|(m, adj)| structural_features(params, adj, m))
        .collect();
    let mut degenerate = 0;
    let mut traces = Vec::with_capacity(nodes.len());
    let mut total = 0.0;

    for &i in nodes {
        if i >= dims.targets {
            return Err(ModelError::NodeOutOfRange {
                node: i,
                len: dims.targets,
            });
        }
        let label = labels.and_then(|l| l.get(i).copied().flatten());
        let mut paths = Vec::with_capacity(dims.metapaths);
        for (m, adj) in adjacency.iter().enumerate() {
            let h = &features[m];
            let all = adj.row(i).0;
            let neighbors: Vec<usize> = opts
                .sampling
                .positions(m, i, all.len())
                .into_iter()
                .map(|p| all[p])
                .collect();
            let similarities: Vec<f64> = neighbors
                .iter()
                .map(|&j| {
                    let c = cosine(h.row(i), h.row(j));
                    degenerate += usize::from(c.degenerate);
                    c.value
                })
                .collect();
            let coeffs = softmax(&similarities);
            let mut pre_activation = Array1::zeros(dims.embed);
            for (&j, &c) in neighbors.iter().zip(&coeffs) {
                pre_activation.scaled_add(c, &h.row(j));
            }
            let aggregated = pre_activation.mapv(|z| opts.activation.apply(z));
            let u = concatenate(Axis(0), &[aggregated.view(), h.row(i)]).expect("1-d concat");
            let embedding = params.combine[m].dot(&u);
            let projected = params.project.dot(&embedding);
            let s = cosine(params.preference.row(i), projected.view());
            degenerate += usize::from(s.degenerate);
            paths.push(PathTrace {
                neighbors,
                similarities,
                coeffs,
                pre_activation,
                aggregated,
                embedding,
                projected,
                score: s.value,
            });
        }
        let scores: Vec<f64> = paths.iter().map(|p| p.score).collect();
        let path_coeffs = softmax(&scores);
        let mut fused = Array1::zeros(dims.embed);
        for (p, &c) in paths.iter().zip(&path_coeffs) {
            fused.scaled_add(c, &p.embedding);
        }
        let logits = params.classifier.dot(&fused);
        let probs = Array1::from(softmax(logits.as_slice().expect("contiguous")));
        let loss = match label {
            Some(y) => {
                if y >= dims.labels {
                    return Err(ModelError::LabelOutOfRange {
                        node: i,
                        label: y,
                        labels: dims.labels,
                    });
                }
                let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                lse - logits[y]
            }
            None => 0.0,
        };
        total += loss;
        traces.push(NodeTrace {
            node: i,
            label,
            paths,
            path_coeffs,
            fused,
            probs,
            loss,
        });
    }
    Ok(ForwardTrace {
        features,
        nodes: traces,
        loss: total,
        degenerate_cosines: degenerate,
        activation: opts.activation,
    })
}

/// Summed cross-entropy over `batch`. Every batch node must be labeled.
pub fn loss(
    params: &ModelParams,
    adjacency: &[MetaPathAdjacency],
    batch: &[usize],
    labels: &[Option<usize>],
    opts: &ForwardOptions,
) -> Result<(f64, ForwardTrace), ModelError> {
    if let Some(&i) = batch
        .iter()
        .find(|&&i| labels.get(i).copied().flatten().is_none())
    {
        return Err(ModelError::Unlabeled(i));
    }
    let trace = forward(params, adjacency, batch, Some(labels), opts)?;
    Ok((trace.loss, trace))
}

/// Fused embeddings of `nodes`, one row each.
pub fn embed(
    params: &ModelParams,
    adjacency: &[MetaPathAdjacency],
    nodes: &[usize],
    opts: &ForwardOptions,
) -> Result<Array2<f64>, ModelError> {
    let trace = forward(params, adjacency, nodes, None, opts)?;
    let mut out = Array2::zeros((nodes.len(), params.dims.embed));
    for (mut row, t) in out.rows_mut().into_iter().zip(&trace.nodes) {
        row.assign(&t.fused);
    }
    Ok(out)
}

/// Most probable class per node (lowest index on ties).
pub fn predict(
    params: &ModelParams,
    adjacency: &[MetaPathAdjacency],
    nodes: &[usize],
    opts: &ForwardOptions,
) -> Result<Vec<usize>, ModelError> {
    let trace = forward(params, adjacency, nodes, None, opts)?;
    Ok(trace
        .nodes
        .iter()
        .map(|t| {
            t.probs
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
                .0
        })
        .collect())
}
