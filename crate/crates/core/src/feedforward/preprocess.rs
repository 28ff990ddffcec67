//! Input standardization and principal-component analysis.

use super::data::LabeledSet;
use super::NetError;
use crate::numerics::{symmetric_eigen, Matrix, SymmetricMatrix};

/// Per-component shift and scale fitted on a training set, so the same
/// transformation can later be applied to validation or test inputs.
#[derive(Clone, Debug)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub deviations: Vec<f64>,
}

impl Standardizer {
    /// Shift by the stored mean and divide by the stored deviation.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.means.len(), "input width mismatch");
        x.iter()
            .zip(&self.means)
            .zip(&self.deviations)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Transform every input of a set, keeping targets as they are.
    pub fn apply(&self, set: &LabeledSet) -> Result<LabeledSet, NetError> {
        let inputs = set.inputs().iter().map(|x| self.transform(x)).collect();
        LabeledSet::new(inputs, set.targets().to_vec(), set.convention())
    }
}

/// Shift each input component to mean zero and unit variance over the set
/// (population variance, 1/p). Components with exactly zero variance carry
/// no information and make the scale undefined, so they are reported as an
/// error and should be dropped before training.
pub fn preprocess(set: &LabeledSet) -> Result<(LabeledSet, Standardizer), NetError> {
    if set.is_empty() {
        return Err(NetError::BadConfig("cannot standardize an empty set".into()));
    }
    let n = set.input_dim();
    let p = set.len() as f64;
    let mut means = vec![0.0; n];
    for x in set.inputs() {
        for (m, v) in means.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= p;
    }
    let mut variances = vec![0.0; n];
    for x in set.inputs() {
        for ((var, v), m) in variances.iter_mut().zip(x).zip(&means) {
            *var += (v - m) * (v - m);
        }
    }
    let flat: Vec<usize> = variances
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 0.0)
        .map(|(i, _)| i)
        .collect();
    if !flat.is_empty() {
        return Err(NetError::ZeroVariance { components: flat });
    }
    let deviations = variances.iter().map(|v| (v / p).sqrt()).collect();
    let standardizer = Standardizer { means, deviations };
    let transformed = standardizer.apply(set)?;
    Ok((transformed, standardizer))
}

/// Principal components of a point cloud: the mean, all eigenvalues of the
/// covariance matrix in descending order, and the leading eigenvectors as
/// rows of `components`.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub components: Matrix,
}

impl Pca {
    /// Coordinates of a point along the kept principal directions.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.mean.len(), "input width mismatch");
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.components.mul_vec(&centered)
    }

    /// Map projected coordinates back into the original space.
    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        assert_eq!(projected.len(), self.components.rows(), "projection width mismatch");
        let mut out = self.mean.clone();
        for (k, a) in projected.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.components.row(k)) {
                *o += a * w;
            }
        }
        out
    }
}

/// Diagonalize the covariance matrix C = (1/p) sum of (x - mean) outer
/// products and keep the `keep` leading principal directions.
pub fn pca(data: &[Vec<f64>], keep: usize) -> Result<Pca, NetError> {
    let p = data.len();
    if p == 0 {
        return Err(NetError::BadConfig("pca needs at least one point".into()));
    }
    let n = data[0].len();
    if data.iter().any(|x| x.len() != n) {
        return Err(NetError::BadDataFile("ragged input rows".into()));
    }
    if keep == 0 || keep > n {
        return Err(NetError::BadConfig(format!(
            "cannot keep {keep} of {n} components"
        )));
    }
    let mut mean = vec![0.0; n];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= p as f64;
    }
    let mut covariance = SymmetricMatrix::zeros(n);
    for x in data {
        for i in 0..n {
            let di = x[i] - mean[i];
            for j in i..n {
                covariance.add(i, j, di * (x[j] - mean[j]));
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let scaled = covariance.get(i, j) / p as f64;
            covariance.set(i, j, scaled);
        }
    }
    let (eigenvalues, vectors) = symmetric_eigen(&covariance);
    let components = Matrix::from_fn(keep, n, |k, j| vectors[(j, k)]);
    Ok(Pca {
        mean,
        eigenvalues,
        components,
    })
}
