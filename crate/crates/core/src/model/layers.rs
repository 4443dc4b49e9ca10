//! Single-node building blocks of the two attention levels.
//!
//! The batched forward pass in [`super::forward`] uses the same primitives
//! (`cosine`, `softmax`, [`Activation`]) over precomputed features; the
//! functions here evaluate one node at a time and are the reference surface
//! for unit checks.

use ndarray::{concatenate, Array1, ArrayView1, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};
use crate::graph::MetaPathAdjacency;

/// Cosine similarity, with a flag when either side has zero norm (the value
/// is then defined as 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    pub degenerate: bool,
}

pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Cosine {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Cosine {
            value: 0.0,
            degenerate: true,
        };
    }
    Cosine {
        value: (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Partial derivatives of `cos(a, b)` with respect to `a` and `b`; zero when
/// the cosine is degenerate.
pub fn cosine_grads(a: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return (Array1::zeros(a.len()), Array1::zeros(b.len()));
    }
    let r = a.dot(&b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let da = &b * inv - &a * (r / (na * na));
    let db = &a * inv - &b * (r / (nb * nb));
    (da, db)
}

/// Numerically stable softmax. Empty input gives empty output.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let Some(max) = xs.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Activation applied to the attention-weighted neighbour sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    #[default]
    Elu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }
}

/// Uniform neighbour sampling. `max: None` keeps every neighbour.
///
/// The sample for a node depends only on `(seed, metapath, node)`, so it does
/// not change with batch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborSampling {
    pub max: Option<usize>,
    pub seed: u64,
}

impl NeighborSampling {
    pub const ALL: NeighborSampling = NeighborSampling { max: None, seed: 0 };

    pub fn new(max: Option<usize>, seed: u64) -> Self {
        Self { max, seed }
    }

    /// Picks positions into a neighbour list of length `len`, ascending.
    pub fn positions(&self, metapath: usize, node: usize, len: usize) -> Vec<usize> {
        match self.max {
            Some(m) if m < len => {
                let key = self
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add((metapath as u64) << 40)
                    .wrapping_add(node as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                let mut picked = index::sample(&mut rng, len, m).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..len).collect(),
        }
    }
}

fn check_metapath(params: &ModelParams, metapath: usize) -> Result<(), ModelError> {
    if metapath >= params.dims.metapaths {
        return Err(ModelError::Shape(format!(
            "meta path {metapath} out of range ({} configured)",
            params.dims.metapaths
        )));
    }
    Ok(())
}

fn check_node(adj: &MetaPathAdjacency, i: usize) -> Result<(), ModelError> {
    if i >= adj.size() {
        return Err(ModelError::NodeOutOfRange {
            node: i,
            len: adj.size(),
        });
    }
    Ok(())
}

/// Structural feature of node `i`: the meta-path transform applied to its
/// adjacency vector.
pub fn transform_features(
    params: &ModelParams,
    adj: &MetaPathAdjacency,
    metapath: usize,
    i: usize,
) -> Result<Array1<f64>, ModelError> {
    check_metapath(params, metapath)?;
    check_node(adj, i)?;
    let w = &params.transform[metapath];
    if w.ncols() != adj.size() {
        return Err(ModelError::Shape(format!(
            "transform[{metapath}] has {} columns, adjacency has {} nodes",
            w.ncols(),
            adj.size()
        )));
    }
    let mut out = Array1::zeros(w.nrows());
    let (cols, counts) = adj.row(i);
    for (&c, &v) in cols.iter().zip(counts) {
        out.scaled_add(v as f64, &w.column(c));
    }
    Ok(out)
}

/// Cosine similarity of the structural features of `i` and `j`.
pub fn node_similarity(
    params: &ModelParams,
    adj: &MetaPathAdjacency,
    metapath: usize,
    i: usize,
    j: usize,
) -> Result<Cosine, ModelError> {
    let hi = transform_features(params, adj, metapath, i)?;
    let hj = transform_features(params, adj, metapath, j)?;
    Ok(cosine(hi.view(), hj.view()))
}

/// Softmax of similarities over all meta-path neighbours of `i`, as
/// `(neighbour, coefficient)` pairs in ascending neighbour order.
pub fn node_attention(
    params: &ModelParams,
    adj: &MetaPathAdjacency,
    metapath: usize,
    i: usize,
) -> Result<Vec<(usize, f64)>, ModelError> {
    let hi = transform_features(params, adj, metapath, i)?;
    let neighbours: Vec<usize> = adj.row(i).0.to_vec();
    let mut sims = Vec::with_capacity(neighbours.len());
    for &j in &neighbours {
        let hj = transform_features(params, adj, metapath, j)?;
        sims.push(cosine(hi.view(), hj.view()).value);
    }
    Ok(neighbours.into_iter().zip(softmax(&sims)).collect())
}

/// Activation of the attention-weighted sum of neighbour features. Only a
/// sample of at most `sampling.max` neighbours takes part; their coefficients
/// are renormalised over the sample.
pub fn aggregate_neighbors(
    params: &ModelParams,
    adj: &MetaPathAdjacency,
    metapath: usize,
    i: usize,
    coeffs: &[(usize, f64)],
    sampling: &NeighborSampling,
    activation: Activation,
) -> Result<Array1<f64>, ModelError> {
    check_metapath(params, metapath)?;
    let mut z = Array1::zeros(params.dims.embed);
    let picked = sampling.positions(metapath, i, coeffs.len());
    let total: f64 = picked.iter().map(|&p| coeffs[p].1).sum();
    if total > 0.0 {
        for &p in &picked {
            let (j, c) = coeffs[p];
            let hj = transform_features(params, adj, metapath, j)?;
            z.scaled_add(c / total, &hj);
        }
    }
    Ok(z.mapv(|v| activation.apply(v)))
}

/// Meta-path embedding: combiner applied to `[aggregated | self_feature]`.
pub fn metapath_embedding(
    params: &ModelParams,
    metapath: usize,
    aggregated: ArrayView1<f64>,
    self_feature: ArrayView1<f64>,
) -> Result<Array1<f64>, ModelError> {
    check_metapath(params, metapath)?;
    let w = &params.combine[metapath];
    if aggregated.len() + self_feature.len() != w.ncols() {
        return Err(ModelError::Shape(format!(
            "combine[{metapath}] expects {} inputs, got {} + {}",
            w.ncols(),
            aggregated.len(),
            self_feature.len()
        )));
    }
    let u = concatenate(Axis(0), &[aggregated, self_feature]).expect("1-d concat");
    Ok(w.dot(&u))
}

/// Meta-path level attention of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathAttention {
    /// cosine of the preference vector against each projected embedding
    pub scores: Vec<Cosine>,
    /// softmax of the scores, one per meta path
    pub coeffs: Vec<f64>,
}

pub fn metapath_attention(
    params: &ModelParams,
    i: usize,
    embeddings: &[Array1<f64>],
) -> Result<MetaPathAttention, ModelError> {
    if embeddings.is_empty() {
        return Err(ModelError::Shape("no meta-path embeddings".into()));
    }
    if i >= params.preference.nrows() {
        return Err(ModelError::NodeOutOfRange {
            node: i,
            len: params.preference.nrows(),
        });
    }
    let p = params.preference.row(i);
    let mut scores = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        if e.len() != params.project.ncols() {
            return Err(ModelError::Shape(format!(
                "embedding has {} entries, projection expects {}",
                e.len(),
                params.project.ncols()
            )));
        }
        let q = params.project.dot(e);
        scores.push(cosine(p, q.view()));
    }
    let raw: Vec<f64> = scores.iter().map(|s| s.value).collect();
    Ok(MetaPathAttention {
        coeffs: softmax(&raw),
        scores,
    })
}

/// Convex combination of per-meta-path embeddings.
pub fn fuse(embeddings: &[Array1<f64>], coeffs: &[f64]) -> Result<Array1<f64>, ModelError> {
    let first = embeddings
        .first()
        .ok_or_else(|| ModelError::Shape("no embeddings to fuse".into()))?;
    if embeddings.len() != coeffs.len() {
        return Err(ModelError::Shape(format!(
            "{} embeddings but {} coefficients",
            embeddings.len(),
            coeffs.len()
        )));
    }
    let mut out = Array1::zeros(first.len());
    for (e, &c) in embeddings.iter().zip(coeffs) {
        out.scaled_add(c, e);
    }
    Ok(out)
}
