//! Learning without targets: Hebbian familiarity, principal components by
//! Oja's and Sanger's rules, competitive clustering, and self-organizing
//! maps with the density-law experiment.
//!
//! All rules are driven by a sampler closure that draws one pattern per
//! call from the input distribution, so tests and experiments can plug in
//! discrete sets, mixtures, or analytic densities alike.

use crate::numerics::RandomStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UnsupervisedError {
    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("bad shapes: {0}")]
    BadShapes(String),

    #[error("weight norm {norm:.3} exceeded 10 at step {step}; the learning rate is too large for this data")]
    Diverged { step: usize, norm: f64 },

    #[error("map weights are not monotone, the density estimator needs an ordered map")]
    UnorderedMap,

    #[error("density is flat across the map, the log-log slope is undefined")]
    FlatDensity,
}

fn check_finite_rows(rows: &[Vec<f64>], what: &str) -> Result<(), UnsupervisedError> {
    if rows.is_empty() {
        return Err(UnsupervisedError::BadShapes(format!("no {what}")));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(UnsupervisedError::BadShapes(format!("{what} have dimension zero")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(UnsupervisedError::BadShapes(format!(
                "{what} {i} has dimension {}, expected {dim}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(UnsupervisedError::BadShapes(format!(
                "{what} {i} has a non-finite entry"
            )));
        }
    }
    Ok(())
}

/// Index of the weight vector closest to the pattern in Euclidean
/// distance. Ties go to the lowest index.
fn winner_index(weights: &[Vec<f64>], xi: &[f64]) -> usize {
    let mut best = 0;
    let mut best_distance = f64::INFINITY;
    for (i, w) in weights.iter().enumerate() {
        let d: f64 = w.iter().zip(xi).map(|(wi, xii)| (wi - xii).powi(2)).sum();
        if d < best_distance {
            best_distance = d;
            best = i;
        }
    }
    best
}

/// Bank of M linear units y_i = w_i . xi sharing one input layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearUnitBank {
    weights: Vec<Vec<f64>>,
}

impl LinearUnitBank {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<LinearUnitBank, UnsupervisedError> {
        check_finite_rows(&weights, "weight vectors")?;
        Ok(LinearUnitBank { weights })
    }

    /// Unit-norm weight vectors with random directions.
    pub fn random_directions(
        units: usize,
        dimension: usize,
        stream: &mut RandomStream,
    ) -> Result<LinearUnitBank, UnsupervisedError> {
        let weights = (0..units)
            .map(|_| random_unit_vector(dimension, stream))
            .collect();
        LinearUnitBank::new(weights)
    }

    /// Weights seeded with draws from the data distribution, so every unit
    /// starts where patterns actually occur and none is left dead.
    pub fn sampled_from_data<F>(
        units: usize,
        mut sampler: F,
        stream: &mut RandomStream,
    ) -> Result<LinearUnitBank, UnsupervisedError>
    where
        F: FnMut(&mut RandomStream) -> Vec<f64>,
    {
        let weights = (0..units).map(|_| sampler(stream)).collect();
        LinearUnitBank::new(weights)
    }

    pub fn unit_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dimension(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weight(&self, unit: usize) -> &[f64] {
        &self.weights[unit]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Outputs y_i = w_i . xi of every unit.
    pub fn outputs(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.dimension(), "pattern dimension");
        self.weights
            .iter()
            .map(|w| w.iter().zip(xi).map(|(wi, xii)| wi * xii).sum())
            .collect()
    }
}

fn random_unit_vector(dimension: usize, stream: &mut RandomStream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| stream.gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Plain Hebbian step w' = w + eta y xi with y = w . xi. The output grows
/// with pattern familiarity, and nothing bounds the weights.
pub fn hebb_unsupervised_step(w: &mut [f64], xi: &[f64], eta: f64) {
    assert_eq!(w.len(), xi.len(), "pattern dimension");
    assert!(eta > 0.0, "learning rate must be positive");
    let y: f64 = w.iter().zip(xi).map(|(wi, xii)| wi * xii).sum();
    for (wi, xii) in w.iter_mut().zip(xi) {
        *wi += eta * y * xii;
    }
}

/// One step of Oja's rule, delta w = eta y (xi - y w): Hebbian growth with
/// a decay term that holds the norm at one in the steady state.
pub fn oja_step(w: &mut [f64], xi: &[f64], eta: f64) {
    assert_eq!(w.len(), xi.len(), "pattern dimension");
    assert!(eta > 0.0, "learning rate must be positive");
    let y: f64 = w.iter().zip(xi).map(|(wi, xii)| wi * xii).sum();
    for (wi, xii) in w.iter_mut().zip(xi) {
        *wi += eta * y * (xii - y * *wi);
    }
}

/// Train a single linear unit with Oja's rule from a random unit-norm
/// start. The steady state is normalized, aligned with the leading
/// eigenvector of <xi xi^T>, and maximises <y^2>. The learning rate must
/// be small against the leading eigenvalue or the iteration oscillates and
/// blows up; a norm above 10 aborts with a rate diagnostic.
pub fn oja_train<F>(
    dimension: usize,
    mut sampler: F,
    eta: f64,
    steps: usize,
    stream: &mut RandomStream,
) -> Result<Vec<f64>, UnsupervisedError>
where
    F: FnMut(&mut RandomStream) -> Vec<f64>,
{
    if dimension == 0 {
        return Err(UnsupervisedError::BadShapes("dimension zero".into()));
    }
    if !(eta > 0.0) {
        return Err(UnsupervisedError::BadConfig(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    let mut w = random_unit_vector(dimension, stream);
    for step in 0..steps {
        let xi = sampler(stream);
        assert_eq!(xi.len(), dimension, "sampler dimension");
        oja_step(&mut w, &xi, eta);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm <= 10.0) {
            return Err(UnsupervisedError::Diverged { step, norm });
        }
    }
    Ok(w)
}

/// One step of Sanger's rule on a bank of M units,
/// delta w_ij = eta y_i (xi_j - sum_{k <= i} y_k w_kj).
/// The partial sum makes row i converge to the i-th principal direction
/// in order. All increments are evaluated at the pre-update weights.
pub fn sanger_step(bank: &mut LinearUnitBank, xi: &[f64], eta: f64) {
    bank_step(bank, xi, eta, true);
}

/// One step of the M-unit Oja rule: like Sanger's rule but the decay sum
/// runs over all M units, so the rows only span the principal subspace.
pub fn oja_m_step(bank: &mut LinearUnitBank, xi: &[f64], eta: f64) {
    bank_step(bank, xi, eta, false);
}

fn bank_step(bank: &mut LinearUnitBank, xi: &[f64], eta: f64, partial: bool) {
    assert!(eta > 0.0, "learning rate must be positive");
    let y = bank.outputs(xi);
    let m = bank.unit_count();
    let dim = bank.dimension();
    let mut increments = vec![vec![0.0; dim]; m];
    for i in 0..m {
        let top = if partial { i + 1 } else { m };
        for j in 0..dim {
            let mut reconstruction = 0.0;
            for k in 0..top {
                reconstruction += y[k] * bank.weights[k][j];
            }
            increments[i][j] = eta * y[i] * (xi[j] - reconstruction);
        }
    }
    for (w, inc) in bank.weights.iter_mut().zip(&increments) {
        for (wj, dj) in w.iter_mut().zip(inc) {
            *wj += dj;
        }
    }
}

/// Winner index for a pattern, with ties going to the lowest unit index.
pub fn competitive_winner(bank: &LinearUnitBank, xi: &[f64]) -> usize {
    assert_eq!(xi.len(), bank.dimension(), "pattern dimension");
    winner_index(&bank.weights, xi)
}

/// One competitive-learning step: only the winning unit moves, by
/// delta w = eta (xi - w). Returns the winner. Every other weight vector
/// is left bit-identical.
pub fn competitive_step(bank: &mut LinearUnitBank, xi: &[f64], eta: f64) -> usize {
    assert!(eta > 0.0, "learning rate must be positive");
    let winner = competitive_winner(bank, xi);
    for (wj, xij) in bank.weights[winner].iter_mut().zip(xi) {
        *wj += eta * (xij - *wj);
    }
    winner
}

/// Train a bank competitively on draws from the sampler. Returns the
/// half squared distance from each drawn pattern to its winner before the
/// update, as a per-step progress trace: its running average is the
/// clustering energy being descended.
pub fn competitive_train<F>(
    bank: &mut LinearUnitBank,
    mut sampler: F,
    eta: f64,
    steps: usize,
    stream: &mut RandomStream,
) -> Vec<f64>
where
    F: FnMut(&mut RandomStream) -> Vec<f64>,
{
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let xi = sampler(stream);
        let winner = competitive_winner(bank, &xi);
        let distance: f64 = bank.weights[winner]
            .iter()
            .zip(&xi)
            .map(|(w, x)| (w - x).powi(2))
            .sum();
        trace.push(0.5 * distance);
        competitive_step(bank, &xi, eta);
    }
    trace
}

/// Cluster label (winner index) for each pattern.
pub fn assign(bank: &LinearUnitBank, patterns: &[Vec<f64>]) -> Vec<usize> {
    patterns.iter().map(|xi| competitive_winner(bank, xi)).collect()
}

/// Clustering energy over a pattern set: the mean half squared distance
/// from each pattern to its winning weight vector.
pub fn competitive_energy(bank: &LinearUnitBank, patterns: &[Vec<f64>]) -> f64 {
    let total: f64 = patterns
        .iter()
        .map(|xi| {
            let winner = competitive_winner(bank, xi);
            bank.weights[winner]
                .iter()
                .zip(xi)
                .map(|(w, x)| (w - x).powi(2))
                .sum::<f64>()
        })
        .sum();
    0.5 * total / patterns.len() as f64
}

/// Output units on a fixed spatial grid, each with a weight vector into
/// input space. The grid geometry enters learning only through the
/// neighbourhood function.
#[derive(Clone, Debug)]
pub struct SelfOrganizingMap {
    coords: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl SelfOrganizingMap {
    pub fn new(
        coords: Vec<Vec<f64>>,
        weights: Vec<Vec<f64>>,
    ) -> Result<SelfOrganizingMap, UnsupervisedError> {
        check_finite_rows(&coords, "grid coordinates")?;
        check_finite_rows(&weights, "weight vectors")?;
        if coords.len() != weights.len() {
            return Err(UnsupervisedError::BadShapes(format!(
                "{} grid coordinates for {} weight vectors",
                coords.len(),
                weights.len()
            )));
        }
        for i in 0..coords.len() {
            for j in 0..i {
                if coords[i] == coords[j] {
                    return Err(UnsupervisedError::BadShapes(format!(
                        "units {j} and {i} share the grid coordinate {:?}",
                        coords[i]
                    )));
                }
            }
        }
        Ok(SelfOrganizingMap { coords, weights })
    }

    /// One-dimensional map with units at grid positions 0..units and zero
    /// weights; seed the weights before training.
    pub fn line(units: usize, input_dim: usize) -> Result<SelfOrganizingMap, UnsupervisedError> {
        let coords = (0..units).map(|i| vec![i as f64]).collect();
        let weights = vec![vec![0.0; input_dim]; units];
        SelfOrganizingMap::new(coords, weights)
    }

    /// Two-dimensional rows-by-cols grid with zero weights.
    pub fn grid(
        rows: usize,
        cols: usize,
        input_dim: usize,
    ) -> Result<SelfOrganizingMap, UnsupervisedError> {
        let mut coords = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                coords.push(vec![r as f64, c as f64]);
            }
        }
        let weights = vec![vec![0.0; input_dim]; rows * cols];
        SelfOrganizingMap::new(coords, weights)
    }

    /// Replace every weight with a draw from the data distribution, the
    /// same dead-unit mitigation as for competitive learning.
    pub fn seed_weights_from_data<F>(
        &mut self,
        mut sampler: F,
        stream: &mut RandomStream,
    ) -> Result<(), UnsupervisedError>
    where
        F: FnMut(&mut RandomStream) -> Vec<f64>,
    {
        let dim = self.input_dim();
        for w in &mut self.weights {
            let xi = sampler(stream);
            if xi.len() != dim {
                return Err(UnsupervisedError::BadShapes(format!(
                    "sampler produced dimension {}, map expects {dim}",
                    xi.len()
                )));
            }
            *w = xi;
        }
        Ok(())
    }

    pub fn unit_count(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn grid_dim(&self) -> usize {
        self.coords[0].len()
    }

    pub fn coord(&self, unit: usize) -> &[f64] {
        &self.coords[unit]
    }

    pub fn weight(&self, unit: usize) -> &[f64] {
        &self.weights[unit]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Largest distance between any two grid coordinates.
    pub fn grid_diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.coords.len() {
            for j in 0..i {
                let d: f64 = self.coords[i]
                    .iter()
                    .zip(&self.coords[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                best = best.max(d);
            }
        }
        best.sqrt()
    }

    /// CSV dump for external plotting: one line per unit, grid coordinates
    /// first, then the weight components.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (r, w) in self.coords.iter().zip(&self.weights) {
            let fields: Vec<String> = r.iter().chain(w).map(|v| v.to_string()).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Distance beyond which the Gaussian neighbourhood underflows to nothing
/// worth updating, in units of sigma.
const NEIGHBOURHOOD_CUTOFF: f64 = 8.0;

/// One self-organizing update: find the winner by Euclidean distance,
/// then move every unit toward the pattern weighted by the Gaussian
/// neighbourhood exp(-|r_i - r_winner|^2 / 2 sigma^2) of grid distance.
/// Returns the winner. As sigma drops to zero only the winner moves and
/// the step reduces to competitive learning.
pub fn kohonen_step(map: &mut SelfOrganizingMap, xi: &[f64], eta: f64, sigma: f64) -> usize {
    assert_eq!(xi.len(), map.input_dim(), "pattern dimension");
    assert!(eta > 0.0, "learning rate must be positive");
    assert!(sigma > 0.0, "neighbourhood width must be positive");
    let winner = winner_index(&map.weights, xi);
    let winner_coord = map.coords[winner].clone();
    let cutoff = (NEIGHBOURHOOD_CUTOFF * sigma).powi(2);
    for (coord, w) in map.coords.iter().zip(map.weights.iter_mut()) {
        let grid_distance: f64 = coord
            .iter()
            .zip(&winner_coord)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        if grid_distance > cutoff {
            continue;
        }
        let lambda = (-grid_distance / (2.0 * sigma * sigma)).exp();
        if lambda == 0.0 {
            continue;
        }
        for (wj, xij) in w.iter_mut().zip(xi) {
            *wj += eta * lambda * (xij - *wj);
        }
    }
    winner
}

/// Map energy over a pattern set at a fixed neighbourhood width: the mean
/// half squared pattern-to-unit distance weighted by the neighbourhood of
/// each pattern's winner.
pub fn kohonen_energy(map: &SelfOrganizingMap, patterns: &[Vec<f64>], sigma: f64) -> f64 {
    assert!(sigma > 0.0, "neighbourhood width must be positive");
    let mut total = 0.0;
    for xi in patterns {
        let winner = winner_index(&map.weights, xi);
        for (coord, w) in map.coords.iter().zip(&map.weights) {
            let grid_distance: f64 = coord
                .iter()
                .zip(&map.coords[winner])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let lambda = (-grid_distance / (2.0 * sigma * sigma)).exp();
            let distance: f64 = w.iter().zip(xi).map(|(a, b)| (a - b).powi(2)).sum();
            total += lambda * distance;
        }
    }
    0.5 * total / patterns.len() as f64
}

/// One schedule phase: learning rate and neighbourhood width interpolate
/// linearly from start to end over the steps. Both must stay positive and
/// non-increasing.
#[derive(Clone, Copy, Debug)]
pub struct KohonenPhase {
    pub eta_start: f64,
    pub eta_end: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub steps: usize,
}

impl KohonenPhase {
    /// Ordering phase: a strong constant rate and a neighbourhood half the
    /// grid across, to pull the net into a globally ordered configuration.
    pub fn ordering(grid_diameter: f64) -> KohonenPhase {
        let sigma = (grid_diameter / 2.0).max(0.5);
        KohonenPhase {
            eta_start: 0.1,
            eta_end: 0.1,
            sigma_start: sigma,
            sigma_end: sigma,
            steps: 10_000,
        }
    }

    /// Convergence phase: rate and width anneal down so the ordered net
    /// settles into the details of the input distribution.
    pub fn convergence(grid_diameter: f64) -> KohonenPhase {
        let sigma = (grid_diameter / 2.0).max(0.5);
        KohonenPhase {
            eta_start: 0.1,
            eta_end: 0.01,
            sigma_start: sigma,
            sigma_end: 0.5,
            steps: 100_000,
        }
    }

    fn validate(&self) -> Result<(), UnsupervisedError> {
        let ok = self.eta_start > 0.0
            && self.eta_end > 0.0
            && self.sigma_start > 0.0
            && self.sigma_end > 0.0
            && self.eta_end <= self.eta_start
            && self.sigma_end <= self.sigma_start;
        if !ok {
            return Err(UnsupervisedError::BadConfig(format!(
                "phase rates and widths must be positive and non-increasing, got eta {} -> {}, sigma {} -> {}",
                self.eta_start, self.eta_end, self.sigma_start, self.sigma_end
            )));
        }
        Ok(())
    }

    fn at(&self, step: usize) -> (f64, f64) {
        let frac = if self.steps > 1 {
            step as f64 / (self.steps - 1) as f64
        } else {
            0.0
        };
        (
            self.eta_start + frac * (self.eta_end - self.eta_start),
            self.sigma_start + frac * (self.sigma_end - self.sigma_start),
        )
    }
}

/// Run one schedule phase of self-organizing training on draws from the
/// sampler.
pub fn kohonen_train<F>(
    map: &mut SelfOrganizingMap,
    mut sampler: F,
    phase: &KohonenPhase,
    stream: &mut RandomStream,
) -> Result<(), UnsupervisedError>
where
    F: FnMut(&mut RandomStream) -> Vec<f64>,
{
    phase.validate()?;
    for step in 0..phase.steps {
        let (eta, sigma) = phase.at(step);
        let xi = sampler(stream);
        if xi.len() != map.input_dim() {
            return Err(UnsupervisedError::BadShapes(format!(
                "sampler produced dimension {}, map expects {}",
                xi.len(),
                map.input_dim()
            )));
        }
        kohonen_step(map, &xi, eta, sigma);
    }
    Ok(())
}

/// Count proper crossings between grid edges of the elastic net in weight
/// space. Grid edges join units at grid distance one; a fold or kink in
/// the net makes two such edges cross. Only defined for maps into
/// two-dimensional input space.
pub fn grid_crossings(map: &SelfOrganizingMap) -> Result<usize, UnsupervisedError> {
    if map.input_dim() != 2 {
        return Err(UnsupervisedError::BadConfig(format!(
            "crossing detection needs weights in the plane, input dimension is {}",
            map.input_dim()
        )));
    }
    let n = map.unit_count();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..i {
            let d: f64 = map.coords[i]
                .iter()
                .zip(&map.coords[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            if (d - 1.0).abs() < 1e-9 {
                edges.push((j, i));
            }
        }
    }
    let orient = |a: &[f64], b: &[f64], c: &[f64]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let mut crossings = 0;
    for (e, &(a, b)) in edges.iter().enumerate() {
        for &(c, d) in &edges[e + 1..] {
            if a == c || a == d || b == c || b == d {
                continue;
            }
            let (pa, pb) = (map.weight(a), map.weight(b));
            let (pc, pd) = (map.weight(c), map.weight(d));
            let o1 = orient(pa, pb, pc);
            let o2 = orient(pa, pb, pd);
            let o3 = orient(pc, pd, pa);
            let o4 = orient(pc, pd, pb);
            if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
                crossings += 1;
            }
        }
    }
    Ok(crossings)
}

/// Fit the density-law exponent of an ordered one-dimensional map: the
/// least-squares slope of log density-of-weights against log input
/// density. The weight density is estimated from inverse central
/// differences of the weights over the grid, with the edge units left out
/// because the net never quite reaches the boundary. The steady-state
/// theory predicts a slope of 2/3.
pub fn kohonen_density_exponent<P>(
    map: &SelfOrganizingMap,
    density: P,
) -> Result<f64, UnsupervisedError>
where
    P: Fn(f64) -> f64,
{
    if map.input_dim() != 1 || map.grid_dim() != 1 {
        return Err(UnsupervisedError::BadConfig(
            "density exponent needs a one-dimensional map of a one-dimensional input".into(),
        ));
    }
    let mut order: Vec<usize> = (0..map.unit_count()).collect();
    order.sort_by(|&a, &b| map.coords[a][0].total_cmp(&map.coords[b][0]));
    let w: Vec<f64> = order.iter().map(|&i| map.weights[i][0]).collect();
    let r: Vec<f64> = order.iter().map(|&i| map.coords[i][0]).collect();
    if w.len() < 4 {
        return Err(UnsupervisedError::BadConfig(
            "too few units to estimate a density".into(),
        ));
    }
    let increasing = w.windows(2).all(|p| p[1] > p[0]);
    let decreasing = w.windows(2).all(|p| p[1] < p[0]);
    if !increasing && !decreasing {
        return Err(UnsupervisedError::UnorderedMap);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 1..w.len() - 1 {
        let estimated = (r[i + 1] - r[i - 1]).abs() / (w[i + 1] - w[i - 1]).abs();
        let p = density(w[i]);
        if !(p > 0.0) {
            return Err(UnsupervisedError::BadConfig(format!(
                "density must be positive at the map weights, got {p} at {}",
                w[i]
            )));
        }
        xs.push(p.ln());
        ys.push(estimated.ln());
    }
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut covariance = 0.0;
    let mut variance = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        covariance += (x - x_mean) * (y - y_mean);
        variance += (x - x_mean) * (x - x_mean);
    }
    if variance / n < 1e-12 {
        return Err(UnsupervisedError::FlatDensity);
    }
    Ok(covariance / variance)
}
