//! Networks built by hand rather than trained: a reference XOR net, a
//! one-hidden-layer net for an arbitrary Boolean truth table, and a
//! logarithmic-depth parity net.

use super::activation::Activation;
use super::layers::Layer;
use super::net::LayeredNet;
use super::NetError;
use crate::numerics::Matrix;

/// The classic two-unit XOR net. Inputs are 0/1, the output is the sign
/// convention's +1 for true and -1 for false.
pub fn xor_reference() -> LayeredNet {
    let hidden = Layer::dense_from(
        Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]),
        vec![0.5, 1.5],
        Activation::Step,
    )
    .unwrap();
    let output = Layer::dense_from(
        Matrix::from_rows(&[vec![1.0, -1.0]]),
        vec![0.5],
        Activation::Sign,
    )
    .unwrap();
    LayeredNet::flat(2, vec![hidden, output]).unwrap()
}

/// Worst-case slack of the winner-take-all readout for an n-input table.
///
/// On the pattern matching hidden unit j, that unit's field is n and a unit
/// at Hamming distance d sits at n - 2*delta*d. The output is correct for
/// every possible table exactly when the winner's contribution 1 + tanh(n)
/// outweighs the residual activations of all other units, each at most
/// 1 - tanh(2*delta*d - n), even if every one pulls the other way.
fn winner_margin(n: usize, delta: f64) -> f64 {
    let mut residual = 0.0;
    let mut binomial = 1.0;
    for d in 1..=n {
        binomial *= (n - d + 1) as f64 / d as f64;
        residual += binomial * (1.0 - (2.0 * delta * d as f64 - n as f64).tanh());
    }
    1.0 + (n as f64).tanh() - residual
}

/// Build a net that reproduces an arbitrary Boolean function of n inputs in
/// the +/-1 convention, one tanh hidden unit per input pattern.
///
/// `table[j]` is the target for the input whose k-th component is +1 exactly
/// when bit k of j is set. Hidden unit j matches that pattern with weights
/// +/-delta and threshold n(delta - 1), so its field is n on its own pattern
/// and negative on all others once delta is large enough. The sign readout
/// uses weights gamma*table[j] and threshold -gamma*(sum of the table), which
/// centers each hidden contribution at table[j]*(V_j + 1) >= 0.
pub fn boolean_net(table: &[i8], delta: f64, gamma: f64) -> Result<LayeredNet, NetError> {
    let patterns = table.len();
    if patterns < 2 || !patterns.is_power_of_two() {
        return Err(NetError::BadConstruction(format!(
            "table length must be 2^n with n >= 1, got {patterns}"
        )));
    }
    let n = patterns.trailing_zeros() as usize;
    if table.iter().any(|&t| t != 1 && t != -1) {
        return Err(NetError::BadConstruction(
            "table entries must be +1 or -1".into(),
        ));
    }
    if !delta.is_finite() || delta <= 1.0 {
        return Err(NetError::BadConstruction(format!(
            "hidden units need delta > 1, got {delta}"
        )));
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(NetError::BadConstruction(format!(
            "readout gain must be positive, got {gamma}"
        )));
    }
    let margin = winner_margin(n, delta);
    if margin <= 0.0 {
        return Err(NetError::BadConstruction(format!(
            "delta {delta} is too small for {n} inputs (margin {margin:.3})"
        )));
    }

    let weights = Matrix::from_fn(patterns, n, |j, k| {
        if (j >> k) & 1 == 1 {
            delta
        } else {
            -delta
        }
    });
    let thresholds = vec![n as f64 * (delta - 1.0); patterns];
    let hidden = Layer::dense_from(weights, thresholds, Activation::Tanh)?;

    let readout_weights = Matrix::from_fn(1, patterns, |_, j| gamma * table[j] as f64);
    let table_sum: f64 = table.iter().map(|&t| t as f64).sum();
    let readout = Layer::dense_from(
        readout_weights,
        vec![-gamma * table_sum],
        Activation::Sign,
    )?;
    LayeredNet::flat(n, vec![hidden, readout])
}

/// Input vector in the +/-1 convention for pattern index j of an n-input
/// table.
pub fn pattern_input(j: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if (j >> k) & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

/// Build a net of depth 2*log2(n) computing the parity of n 0/1 inputs with
/// 3(n - 1) step units: XOR blocks pair the bits, then pair the results, and
/// so on down to one output.
pub fn parity_net(n: usize) -> Result<LayeredNet, NetError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(NetError::BadConstruction(format!(
            "parity tree needs a power of two of at least 2 inputs, got {n}"
        )));
    }
    let mut layers = Vec::new();
    let mut width = n;
    while width > 1 {
        let blocks = width / 2;
        let mut pair = Matrix::zeros(2 * blocks, width);
        let mut pair_thresholds = vec![0.0; 2 * blocks];
        for b in 0..blocks {
            for unit in [2 * b, 2 * b + 1] {
                pair[(unit, 2 * b)] = 1.0;
                pair[(unit, 2 * b + 1)] = 1.0;
            }
            pair_thresholds[2 * b] = 0.5;
            pair_thresholds[2 * b + 1] = 1.5;
        }
        layers.push(Layer::dense_from(pair, pair_thresholds, Activation::Step)?);

        let mut combine = Matrix::zeros(blocks, 2 * blocks);
        for b in 0..blocks {
            combine[(b, 2 * b)] = 1.0;
            combine[(b, 2 * b + 1)] = -1.0;
        }
        layers.push(Layer::dense_from(
            combine,
            vec![0.5; blocks],
            Activation::Step,
        )?);
        width = blocks;
    }
    LayeredNet::flat(n, layers)
}
