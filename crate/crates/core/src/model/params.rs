use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Sizes that fix every tensor shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// embedding size `d`
    pub embed: usize,
    /// preference-vector size `k`
    pub pref: usize,
    /// number of classes `L`
    pub labels: usize,
    /// number of target-type nodes `N_t`
    pub targets: usize,
    /// number of meta paths `M`
    pub metapaths: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Ordered list of tensor names and shapes describing a flat parameter
/// vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeManifest {
    pub tensors: Vec<TensorShape>,
}

impl ShapeManifest {
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.rows * t.cols).sum()
    }
}

/// Every learnable tensor of the local embedding model.
///
/// Federated tensors come first, in a fixed order: the per-meta-path
/// transforms, the per-meta-path combiners, the shared projection and the
/// classifier. Preference vectors (one row per target node) are node-bound
/// and stay on the client.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// `d x N_t` per meta path: adjacency vector -> structural feature
    pub transform: Vec<Array2<f64>>,
    /// `d x 2d` per meta path: [aggregated neighbours | self feature] -> embedding
    pub combine: Vec<Array2<f64>>,
    /// `k x d`, shared across meta paths
    pub project: Array2<f64>,
    /// `L x d`
    pub classifier: Array2<f64>,
    /// `N_t x k`, row `i` is the preference vector of target node `i`
    pub preference: Array2<f64>,
}

fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (cols.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let d = dims.embed;
        Self {
            dims,
            transform: (0..dims.metapaths)
                .map(|_| Array2::zeros((d, dims.targets)))
                .collect(),
            combine: (0..dims.metapaths)
                .map(|_| Array2::zeros((d, 2 * d)))
                .collect(),
            project: Array2::zeros((dims.pref, d)),
            classifier: Array2::zeros((dims.labels, d)),
            preference: Array2::zeros((dims.targets, dims.pref)),
        }
    }

    /// Matrices uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; preference
    /// vectors Gaussian scaled by `1/sqrt(k)` then normalised to unit length.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let d = dims.embed;
        let transform = (0..dims.metapaths)
            .map(|_| uniform_fan_in(d, dims.targets, rng))
            .collect();
        let combine = (0..dims.metapaths)
            .map(|_| uniform_fan_in(d, 2 * d, rng))
            .collect();
        let project = uniform_fan_in(dims.pref, d, rng);
        let classifier = uniform_fan_in(dims.labels, d, rng);
        let scale = 1.0 / (dims.pref.max(1) as f64).sqrt();
        let mut preference = Array2::from_shape_simple_fn((dims.targets, dims.pref), || {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        });
        for mut row in preference.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        Self {
            dims,
            transform,
            combine,
            project,
            classifier,
            preference,
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let m = self.dims.metapaths;
        let mut names: Vec<String> = (0..m).map(|p| format!("transform[{p}]")).collect();
        names.extend((0..m).map(|p| format!("combine[{p}]")));
        names.extend(["project", "classifier", "preference"].map(String::from));
        names
    }

    /// All tensors in canonical order, preference last.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = self.transform.iter().collect();
        out.extend(self.combine.iter());
        out.push(&self.project);
        out.push(&self.classifier);
        out.push(&self.preference);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = self.transform.iter_mut().collect();
        out.extend(self.combine.iter_mut());
        out.push(&mut self.project);
        out.push(&mut self.classifier);
        out.push(&mut self.preference);
        out
    }

    fn federated_count(&self) -> usize {
        2 * self.dims.metapaths + 2
    }

    /// Manifest of the federated tensors (everything except preferences).
    pub fn federated_manifest(&self) -> ShapeManifest {
        ShapeManifest {
            tensors: self
                .tensor_names()
                .into_iter()
                .zip(self.tensors())
                .take(self.federated_count())
                .map(|(name, t)| TensorShape {
                    name,
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
        }
    }

    /// Federated tensors flattened row-major in manifest order.
    pub fn federated_vector(&self) -> Vec<f64> {
        let n = self.federated_count();
        let mut out = Vec::with_capacity(self.federated_manifest().total_len());
        for t in self.tensors().into_iter().take(n) {
            out.extend(t.iter().copied());
        }
        out
    }

    /// Overwrites the federated tensors from a flat vector.
    pub fn load_federated(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        let expected = self.federated_manifest().total_len();
        if flat.len() != expected {
            return Err(ModelError::Shape(format!(
                "federated vector has {} values, manifest needs {expected}",
                flat.len()
            )));
        }
        let n = self.federated_count();
        let mut offset = 0;
        for t in self.tensors_mut().into_iter().take(n) {
            for (dst, &src) in t.iter_mut().zip(&flat[offset..]) {
                *dst = src;
            }
            offset += t.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Squared L2 norm over every tensor.
    pub fn norm_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> ModelDims {
        ModelDims {
            embed: 4,
            pref: 3,
            labels: 2,
            targets: 5,
            metapaths: 2,
        }
    }

    #[test]
    fn init_shapes_and_bounds() {
        let p = ModelParams::init(dims(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(p.transform[1].dim(), (4, 5));
        assert_eq!(p.combine[0].dim(), (4, 8));
        assert_eq!(p.project.dim(), (3, 4));
        assert_eq!(p.classifier.dim(), (2, 4));
        assert_eq!(p.preference.dim(), (5, 3));
        let bound = 1.0 / 5f64.sqrt();
        assert!(p.transform[0].iter().all(|v| v.abs() <= bound));
        for row in p.preference.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
        assert!(p.is_finite());
    }

    #[test]
    fn federated_vector_excludes_preferences() {
        let mut p = ModelParams::init(dims(), &mut ChaCha8Rng::seed_from_u64(2));
        let manifest = p.federated_manifest();
        assert_eq!(manifest.tensors.len(), 6);
        assert_eq!(manifest.tensors[0].name, "transform[0]");
        assert_eq!(manifest.tensors[5].name, "classifier");
        let flat = p.federated_vector();
        assert_eq!(flat.len(), 2 * 20 + 2 * 32 + 12 + 8);
        assert_eq!(p.param_count(), flat.len() + 15);

        let prefs = p.preference.clone();
        let zeros = vec![0.0; flat.len()];
        p.load_federated(&zeros).unwrap();
        assert!(p.transform[0].iter().all(|&v| v == 0.0));
        assert_eq!(p.preference, prefs);
        p.load_federated(&flat).unwrap();
        assert_eq!(p.federated_vector(), flat);
        assert!(p.load_federated(&flat[1..]).is_err());
    }
}
