//! Node-classification scoring, stratified splits and curve tables.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::MetaPathAdjacency;
use crate::model::{predict, ForwardOptions, ModelError, ModelParams};
use crate::sim::RoundMetrics;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to score")]
    Empty,
    #[error("{predictions} predictions for {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("label {label} outside 0..{labels}")]
    LabelOutOfRange { label: usize, labels: usize },
    #[error("test node {0} has no label")]
    Unlabeled(usize),
    #[error("split fraction must lie in (0, 1), got {0}")]
    Fraction(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub n_test: usize,
}

/// Micro and macro F1 over classes `0..labels`. A class that never occurs
/// in truths or predictions scores 0 in the macro mean.
pub fn f1_scores(predictions: &[usize], truths: &[usize], labels: usize) -> Result<(f64, f64), EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tp = vec![0u64; labels];
    let mut fp = vec![0u64; labels];
    let mut fneg = vec![0u64; labels];
    for (&p, &t) in predictions.iter().zip(truths) {
        for label in [p, t] {
            if label >= labels {
                return Err(EvalError::LabelOutOfRange { label, labels });
            }
        }
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let f1 = |tp: u64, fp: u64, fneg: u64| {
        let denom = 2 * tp + fp + fneg;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    };
    let sum = |v: &[u64]| v.iter().sum::<u64>();
    let micro = f1(sum(&tp), sum(&fp), sum(&fneg));
    let macro_ = (0..labels).map(|c| f1(tp[c], fp[c], fneg[c])).sum::<f64>() / labels as f64;
    Ok((micro, macro_))
}

/// Disjoint train/test target nodes, stratified by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl EvalSplit {
    /// Each class contributes `round(n_c * test_fraction)` test nodes.
    /// Unlabelled nodes are left out of both sides.
    pub fn stratified(labels: &[Option<usize>], test_fraction: f64, seed: u64) -> Result<Self, EvalError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(EvalError::Fraction(test_fraction));
        }
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (node, label) in labels.iter().enumerate() {
            if let Some(c) = label {
                by_class.entry(*c).or_default().push(node);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for mut members in by_class.into_values() {
            members.shuffle(&mut rng);
            let k = (members.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&members[..k]);
            train.extend_from_slice(&members[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            train,
            test,
            test_fraction,
            seed,
        })
    }
}

/// Scores argmax predictions of `params` on `nodes`.
pub fn evaluate(
    params: &ModelParams,
    adjacency: &[MetaPathAdjacency],
    labels: &[Option<usize>],
    nodes: &[usize],
    opts: &ForwardOptions,
) -> Result<F1Scores, EvalError> {
    let truths = nodes
        .iter()
        .map(|&n| labels.get(n).copied().flatten().ok_or(EvalError::Unlabeled(n)))
        .collect::<Result<Vec<_>, _>>()?;
    let predictions = predict(params, adjacency, nodes, opts)?;
    let (micro_f1, macro_f1) = f1_scores(&predictions, &truths, params.dims.labels)?;
    Ok(F1Scores {
        micro_f1,
        macro_f1,
        n_test: nodes.len(),
    })
}

/// Per-round loss and F1 columns, ordered by round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curves {
    pub loss: Vec<(u64, f64)>,
    pub micro_f1: Vec<(u64, f64)>,
    pub macro_f1: Vec<(u64, f64)>,
}

pub fn curve_extract(metrics: &[RoundMetrics]) -> Curves {
    let mut rows: Vec<&RoundMetrics> = metrics.iter().collect();
    rows.sort_by_key(|m| m.round);
    Curves {
        loss: rows.iter().map(|m| (m.round, m.loss)).collect(),
        micro_f1: rows.iter().map(|m| (m.round, m.micro_f1)).collect(),
        macro_f1: rows.iter().map(|m| (m.round, m.macro_f1)).collect(),
    }
}

/// Writes `round,loss,micro_f1,macro_f1` rows as CSV.
pub fn write_curves<W: Write>(curves: &Curves, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "loss", "micro_f1", "macro_f1"])?;
    for ((&(r, loss), &(_, mi)), &(_, ma)) in curves.loss.iter().zip(&curves.micro_f1).zip(&curves.macro_f1) {
        w.write_record([r.to_string(), loss.to_string(), mi.to_string(), ma.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
