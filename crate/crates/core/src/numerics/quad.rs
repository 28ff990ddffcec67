//! Gauss-Hermite quadrature for Gaussian expectations.

use super::eigen::symmetric_eigen;
use super::linalg::SymmetricMatrix;
use super::NumericsError;
use std::f64::consts::PI;

/// Precomputed Gauss-Hermite rule of a fixed order.
///
/// Nodes and weights come from the Golub-Welsch construction: the nodes are
/// the eigenvalues of the Jacobi matrix of the (physicists') Hermite
/// recurrence and the weights follow from the first eigenvector components.
/// A rule of order n integrates e^{-x^2} p(x) exactly for polynomials p of
/// degree below 2n.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl HermiteRule {
    /// Builds a rule; `order` must be at least 2.
    pub fn new(order: usize) -> Result<Self, NumericsError> {
        if order < 2 {
            return Err(NumericsError::OrderTooSmall(order));
        }
        // Jacobi matrix: zero diagonal, off-diagonal sqrt(k/2).
        let jacobi = SymmetricMatrix::from_fn(order, |i, j| {
            if j == i + 1 {
                ((i + 1) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let (nodes_desc, vectors) = symmetric_eigen(&jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|j| {
                let first = vectors[(0, j)];
                (nodes_desc[j], PI.sqrt() * first * first)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// E[f(Z)] for Z ~ N(mean, variance).
    pub fn expectation(
        &self,
        mut f: impl FnMut(f64) -> f64,
        mean: f64,
        variance: f64,
    ) -> Result<f64, NumericsError> {
        if variance <= 0.0 {
            return Err(NumericsError::NonPositiveVariance(variance));
        }
        let scale = (2.0 * variance).sqrt();
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum();
        Ok(sum / PI.sqrt())
    }
}

/// One-shot Gaussian expectation ∫ dz N(z; mean, variance) f(z) by
/// Gauss-Hermite quadrature of the given order.
pub fn gaussian_expectation(
    f: impl FnMut(f64) -> f64,
    mean: f64,
    variance: f64,
    order: usize,
) -> Result<f64, NumericsError> {
    HermiteRule::new(order)?.expectation(f, mean, variance)
}
