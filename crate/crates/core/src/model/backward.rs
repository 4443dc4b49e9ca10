use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};

use super::forward::ForwardTrace;
use super::layers::cosine_grads;
use super::{ModelError, ModelParams};
use crate::graph::MetaPathAdjacency;

/// `mat += a b^T`
fn add_outer(mat: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (mut row, &ar) in mat.rows_mut().into_iter().zip(a.iter()) {
        if ar != 0.0 {
            row.scaled_add(ar, &b);
        }
    }
}

/// Exact gradient of `trace.loss` with respect to every tensor, returned in
/// the shape of [`ModelParams`].
///
/// The sampled neighbour sets recorded in the trace are treated as fixed.
pub fn backward(
    params: &ModelParams,
    adjacency: &[MetaPathAdjacency],
    trace: &ForwardTrace,
) -> Result<ModelParams, ModelError> {
    let dims = params.dims;
    if trace.features.len() != dims.metapaths || adjacency.len() != dims.metapaths {
        return Err(ModelError::Shape("trace does not match model".into()));
    }
    let d = dims.embed;
    let mut grads = ModelParams::zeros(dims);
    let mut dfeat: Vec<Array2<f64>> = (0..dims.metapaths)
        .map(|_| Array2::zeros((dims.targets, d)))
        .collect();
    let mut touched = vec![vec![false; dims.targets]; dims.metapaths];
    let act = trace.activation;

    for t in &trace.nodes {
        let Some(y) = t.label else { continue };
        let i = t.node;

        let mut dlogits = t.probs.clone();
        dlogits[y] -= 1.0;
        add_outer(&mut grads.classifier, dlogits.view(), t.fused.view());
        let dfused = params.classifier.t().dot(&dlogits);

        // fused = sum_m delta_m e_m
        let ddelta: Vec<f64> = t.paths.iter().map(|p| dfused.dot(&p.embedding)).collect();
        let weighted: f64 = t.path_coeffs.iter().zip(&ddelta).map(|(c, g)| c * g).sum();

        for (m, p) in t.paths.iter().enumerate() {
            let delta = t.path_coeffs[m];
            let dscore = delta * (ddelta[m] - weighted);
            let mut demb: Array1<f64> = &dfused * delta;

            let (dpref, dproj) = cosine_grads(params.preference.row(i), p.projected.view());
            grads
                .preference
                .row_mut(i)
                .scaled_add(dscore, &dpref);
            let dproj = dproj * dscore;
            add_outer(&mut grads.project, dproj.view(), p.embedding.view());
            demb += &params.project.t().dot(&dproj);

            let h = &trace.features[m];
            let u = concatenate(Axis(0), &[p.aggregated.view(), h.row(i)]).expect("1-d concat");
            add_outer(&mut grads.combine[m], demb.view(), u.view());
            let du = params.combine[m].t().dot(&demb);

            let dh = &mut dfeat[m];
            dh.row_mut(i).scaled_add(1.0, &du.slice(s![d..]));
            touched[m][i] = true;

            let dz: Array1<f64> = du
                .slice(s![..d])
                .iter()
                .zip(&p.pre_activation)
                .map(|(g, &z)| g * act.derivative(z))
                .collect();

            // z = sum_j c_j h_j, c = softmax(s), s_j = cos(h_i, h_j)
            let dcoeff: Vec<f64> = p.neighbors.iter().map(|&j| dz.dot(&h.row(j))).collect();
            let cbar: f64 = p.coeffs.iter().zip(&dcoeff).map(|(c, g)| c * g).sum();
            for (k, &j) in p.neighbors.iter().enumerate() {
                let c = p.coeffs[k];
                dh.row_mut(j).scaled_add(c, &dz);
                touched[m][j] = true;
                let ds = c * (dcoeff[k] - cbar);
                if ds != 0.0 {
                    let (dhi, dhj) = cosine_grads(h.row(i), h.row(j));
                    dh.row_mut(i).scaled_add(ds, &dhi);
                    dh.row_mut(j).scaled_add(ds, &dhj);
                }
            }
        }
    }

    // h_j = W_t A_j  =>  dW_t[:, c] += A_jc dh_j
    for (m, adj) in adjacency.iter().enumerate() {
        let gw = &mut grads.transform[m];
        for j in (0..dims.targets).filter(|&j| touched[m][j]) {
            let (cols, counts) = adj.row(j);
            let dhj = dfeat[m].row(j);
            for (&c, &v) in cols.iter().zip(counts) {
                gw.column_mut(c).scaled_add(v as f64, &dhj);
            }
        }
    }
    Ok(grads)
}
