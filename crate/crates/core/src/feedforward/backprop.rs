//! Cost functions and the backward pass.
//!
//! Gradients are derivatives of the summed minibatch cost H, in the same
//! canonical order as [`LayeredNet::flatten_params`]. Thresholds enter local
//! fields with a minus sign, so their gradient is minus the summed field
//! error; descent steps subtract gradients uniformly for every parameter.

use super::activation::Activation;
use super::layers::{Layer, LayerKind};
use super::net::{ForwardPass, LayeredNet, TraceCache};
use super::{Mode, NetError};
use crate::numerics::{finite_diff_gradient, Matrix};

/// Training cost summed over the minibatch.
///
/// The paired costs assume a matching output activation (checked): the
/// log-likelihood pairs with softmax and the cross entropy with sigmoid, so
/// that in both cases the output-layer field error is exactly O - t.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// H = 1/2 sum (t - O)^2, any non-softmax output.
    Quadratic,
    /// H = -sum t ln O, softmax output.
    LogLikelihoodSoftmax,
    /// H = -sum [t ln O + (1 - t) ln(1 - O)], sigmoid output.
    CrossEntropySigmoid,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Quadratic => "quadratic",
            Loss::LogLikelihoodSoftmax => "log-likelihood",
            Loss::CrossEntropySigmoid => "cross-entropy",
        }
    }

    fn paired(self) -> bool {
        matches!(self, Loss::LogLikelihoodSoftmax | Loss::CrossEntropySigmoid)
    }

    /// Check the loss against the network's output activation.
    pub(crate) fn validate_pairing(self, net: &LayeredNet) -> Result<(), NetError> {
        let out = net.layers().last().expect("validated nonempty").activation;
        let ok = match self {
            Loss::Quadratic => out != Activation::Softmax,
            Loss::LogLikelihoodSoftmax => out == Activation::Softmax,
            Loss::CrossEntropySigmoid => out == Activation::Sigmoid,
        };
        if ok {
            Ok(())
        } else {
            let requirement = match self {
                Loss::Quadratic => "a non-softmax output layer",
                Loss::LogLikelihoodSoftmax => "a softmax output layer",
                Loss::CrossEntropySigmoid => "a sigmoid output layer",
            };
            Err(NetError::InvalidPairing {
                loss: self.name(),
                requirement,
            })
        }
    }
}

/// Every activation in a gradient path must have a derivative.
pub(crate) fn validate_differentiable(net: &LayeredNet) -> Result<(), NetError> {
    for layer in net.layers() {
        if !layer.activation.differentiable() {
            return Err(NetError::NonDifferentiable {
                activation: layer.activation.name(),
            });
        }
    }
    Ok(())
}

/// Cost of a batch of outputs against targets.
///
/// Logarithms are clamped at the smallest positive double, so saturated
/// outputs give a large finite cost instead of infinity.
pub fn loss_energy(loss: Loss, outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    assert_eq!(outputs.len(), targets.len(), "batch size mismatch");
    let ln = |v: f64| v.max(f64::MIN_POSITIVE).ln();
    let mut h = 0.0;
    for (o, t) in outputs.iter().zip(targets) {
        assert_eq!(o.len(), t.len(), "output width mismatch");
        for (oi, ti) in o.iter().zip(t) {
            h += match loss {
                Loss::Quadratic => 0.5 * (ti - oi) * (ti - oi),
                Loss::LogLikelihoodSoftmax => {
                    if *ti == 0.0 {
                        0.0
                    } else {
                        -ti * ln(*oi)
                    }
                }
                Loss::CrossEntropySigmoid => -(ti * ln(*oi) + (1.0 - ti) * ln(1.0 - oi)),
            };
        }
    }
    h
}

/// Per-layer cost gradients, mirroring the layer parameter layout.
#[derive(Clone, Debug)]
pub enum LayerGradients {
    Dense {
        weights: Matrix,
        thresholds: Vec<f64>,
    },
    Convolution {
        kernel: Vec<f64>,
        thresholds: Vec<f64>,
    },
    MaxPool,
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
    },
}

impl LayerGradients {
    fn zeros_like(layer: &Layer) -> LayerGradients {
        match &layer.kind {
            LayerKind::Dense { weights, thresholds } => LayerGradients::Dense {
                weights: Matrix::zeros(weights.rows(), weights.cols()),
                thresholds: vec![0.0; thresholds.len()],
            },
            LayerKind::Convolution { kernel, thresholds, .. } => LayerGradients::Convolution {
                kernel: vec![0.0; kernel.len()],
                thresholds: vec![0.0; thresholds.len()],
            },
            LayerKind::MaxPool { .. } => LayerGradients::MaxPool,
            LayerKind::BatchNorm { gamma, beta, .. } => LayerGradients::BatchNorm {
                gamma: vec![0.0; gamma.len()],
                beta: vec![0.0; beta.len()],
            },
        }
    }
}

/// Gradients for a whole network, one entry per layer.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    /// Flatten in the canonical parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerGradients::Dense { weights, thresholds } => {
                    for i in 0..weights.rows() {
                        out.extend_from_slice(weights.row(i));
                    }
                    out.extend_from_slice(thresholds);
                }
                LayerGradients::Convolution { kernel, thresholds } => {
                    out.extend_from_slice(kernel);
                    out.extend_from_slice(thresholds);
                }
                LayerGradients::MaxPool => {}
                LayerGradients::BatchNorm { gamma, beta } => {
                    out.extend_from_slice(gamma);
                    out.extend_from_slice(beta);
                }
            }
        }
        out
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Gradients of the batch cost with respect to every trainable parameter.
///
/// Runs a training-mode forward pass (batch statistics in batch-norm layers,
/// no dropout) and walks the chain rule backward. Rejects networks with
/// non-differentiable activations and loss/output pairings for which the
/// output error would be wrong.
pub fn backprop(
    net: &LayeredNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    loss: Loss,
) -> Result<Gradients, NetError> {
    validate_differentiable(net)?;
    loss.validate_pairing(net)?;
    if targets.len() != inputs.len() {
        return Err(NetError::CountMismatch {
            context: "targets",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    for t in targets {
        if t.len() != net.output_len() {
            return Err(NetError::TargetSize {
                expected: net.output_len(),
                got: t.len(),
            });
        }
    }
    let pass = net.forward_batch(inputs, Mode::Train, None, None)?;
    backprop_pass(net, &pass, targets, loss)
}

/// Backward pass over an existing training-mode forward trace. The trace may
/// carry dropout masks; dropped units then receive zero gradient.
pub(crate) fn backprop_pass(
    net: &LayeredNet,
    pass: &ForwardPass,
    targets: &[Vec<f64>],
    loss: Loss,
) -> Result<Gradients, NetError> {
    let layers = net.layers();
    let last = layers.len() - 1;
    let mut grads: Vec<LayerGradients> = layers.iter().map(LayerGradients::zeros_like).collect();

    // dH/dO of the final layer; with a paired loss this already equals the
    // final field error dH/db.
    let mut q: Vec<Vec<f64>> = pass
        .outputs()
        .iter()
        .zip(targets)
        .map(|(o, t)| o.iter().zip(t).map(|(oi, ti)| oi - ti).collect())
        .collect();

    for index in (0..layers.len()).rev() {
        let layer = &layers[index];
        let trace = pass.layer(index);
        let x: &[Vec<f64>] = if index == 0 {
            &pass.inputs
        } else {
            &pass.traces[index - 1].outputs
        };

        // Field error r = dH/db for this layer.
        let r: Vec<Vec<f64>> = if index == last && loss.paired() {
            std::mem::take(&mut q)
        } else {
            match &layer.kind {
                LayerKind::MaxPool { .. } => std::mem::take(&mut q),
                _ => q
                    .iter()
                    .zip(&trace.fields)
                    .map(|(qp, bp)| {
                        qp.iter()
                            .zip(bp)
                            .map(|(qi, bi)| qi * layer.activation.derivative(*bi))
                            .collect()
                    })
                    .collect(),
            }
        };

        let need_input_grad = index > 0;
        let q_prev = match (&layer.kind, &mut grads[index]) {
            (
                LayerKind::Dense { weights, .. },
                LayerGradients::Dense {
                    weights: gw,
                    thresholds: gt,
                },
            ) => {
                let mut q_prev = if need_input_grad {
                    vec![vec![0.0; weights.cols()]; x.len()]
                } else {
                    Vec::new()
                };
                for (mu, (rp, xp)) in r.iter().zip(x).enumerate() {
                    for (m, rv) in rp.iter().enumerate() {
                        gt[m] -= rv;
                        let grow = gw.row_mut(m);
                        for (n, xn) in xp.iter().enumerate() {
                            grow[n] += rv * xn;
                        }
                        if need_input_grad {
                            let wrow = weights.row(m);
                            let qp = &mut q_prev[mu];
                            for (n, wn) in wrow.iter().enumerate() {
                                qp[n] += rv * wn;
                            }
                        }
                    }
                }
                q_prev
            }
            (
                LayerKind::Convolution {
                    kernel,
                    maps,
                    in_channels,
                    k_rows,
                    k_cols,
                    stride,
                    padding,
                    ..
                },
                LayerGradients::Convolution {
                    kernel: gk,
                    thresholds: gt,
                },
            ) => {
                let in_shape = net.layer_input_shape(index);
                let out_shape = net.shapes()[index];
                let (h, w) = (in_shape.height, in_shape.width);
                let mut q_prev = if need_input_grad {
                    vec![vec![0.0; in_shape.len()]; x.len()]
                } else {
                    Vec::new()
                };
                for (mu, (rp, xp)) in r.iter().zip(x).enumerate() {
                    for m in 0..*maps {
                        for i in 0..out_shape.height {
                            for j in 0..out_shape.width {
                                let rv = rp[(m * out_shape.height + i) * out_shape.width + j];
                                gt[m] -= rv;
                                for c in 0..*in_channels {
                                    for p in 0..*k_rows {
                                        let Some(row) = (i * stride + p).checked_sub(*padding)
                                        else {
                                            continue;
                                        };
                                        if row >= h {
                                            continue;
                                        }
                                        for qq in 0..*k_cols {
                                            let Some(col) =
                                                (j * stride + qq).checked_sub(*padding)
                                            else {
                                                continue;
                                            };
                                            if col >= w {
                                                continue;
                                            }
                                            let k = ((m * in_channels + c) * k_rows + p) * k_cols
                                                + qq;
                                            let xi = (c * h + row) * w + col;
                                            gk[k] += rv * xp[xi];
                                            if need_input_grad {
                                                q_prev[mu][xi] += rv * kernel[k];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                q_prev
            }
            (LayerKind::MaxPool { .. }, LayerGradients::MaxPool) => {
                let TraceCache::Pool { argmax } = &trace.cache else {
                    panic!("pool trace lost its argmax cache");
                };
                let in_shape = net.layer_input_shape(index);
                let mut q_prev = if need_input_grad {
                    vec![vec![0.0; in_shape.len()]; x.len()]
                } else {
                    Vec::new()
                };
                if need_input_grad {
                    for (mu, rp) in r.iter().enumerate() {
                        for (cell, rv) in rp.iter().enumerate() {
                            q_prev[mu][argmax[mu][cell]] += rv;
                        }
                    }
                }
                q_prev
            }
            (
                LayerKind::BatchNorm { gamma, .. },
                LayerGradients::BatchNorm {
                    gamma: gg,
                    beta: gb,
                },
            ) => {
                let TraceCache::BatchNorm {
                    xhat,
                    centered,
                    inv_std,
                    ..
                } = &trace.cache
                else {
                    panic!("backward pass needs a training-mode batch-norm trace");
                };
                let units = gamma.len();
                let n = x.len() as f64;
                let mut q_prev = if need_input_grad {
                    vec![vec![0.0; units]; x.len()]
                } else {
                    Vec::new()
                };
                for j in 0..units {
                    let is = inv_std[j];
                    let mut du_sum = 0.0;
                    let mut du_center = 0.0;
                    let mut center_sum = 0.0;
                    for mu in 0..x.len() {
                        let rv = r[mu][j];
                        gg[j] += rv * xhat[mu][j];
                        gb[j] += rv;
                        let u = rv * gamma[j];
                        du_sum += u;
                        du_center += u * centered[mu][j];
                        center_sum += centered[mu][j];
                    }
                    if need_input_grad {
                        let dvar = -0.5 * is * is * is * du_center;
                        let dmean = -is * du_sum - dvar * 2.0 / n * center_sum;
                        for mu in 0..x.len() {
                            let u = r[mu][j] * gamma[j];
                            q_prev[mu][j] =
                                u * is + dvar * 2.0 * centered[mu][j] / n + dmean / n;
                        }
                    }
                }
                q_prev
            }
            _ => unreachable!("gradient layout matches layer kind"),
        };

        if index > 0 {
            let mut q_next = q_prev;
            if let Some(mask) = &pass.masks[index - 1] {
                for qp in &mut q_next {
                    for (v, m) in qp.iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
            }
            q = q_next;
        }
    }

    Ok(Gradients { layers: grads })
}

/// Largest normalized deviation between the backward pass and a central
/// finite-difference gradient with step `h`.
///
/// The deviation for one parameter is |analytic - numeric| divided by
/// max(1, |analytic|, |numeric|), so small gradients are compared absolutely
/// and large ones relatively.
pub fn max_gradient_deviation(
    net: &LayeredNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    loss: Loss,
    h: f64,
) -> Result<f64, NetError> {
    let analytic = backprop(net, inputs, targets, loss)?.flatten();
    let params = net.flatten_params();
    let mut probe = net.clone();
    let numeric = finite_diff_gradient(
        |p| {
            probe.assign_params(p);
            let pass = probe
                .forward_batch(inputs, Mode::Train, None, None)
                .expect("audit forward pass");
            loss_energy(loss, pass.outputs(), targets)
        },
        &params,
        h,
    );
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs()))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedforward::net::Shape;
    use crate::numerics::RandomStream;

    fn random_dense(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        stream: &mut RandomStream,
    ) -> Layer {
        let weights = Matrix::from_fn(outputs, inputs, |_, _| 0.8 * stream.gaussian());
        let thresholds = (0..outputs).map(|_| 0.3 * stream.gaussian()).collect();
        Layer::dense_from(weights, thresholds, activation).unwrap()
    }

    fn random_batch(
        net: &LayeredNet,
        batch: usize,
        loss: Loss,
        stream: &mut RandomStream,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let inputs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..net.input_len()).map(|_| stream.uniform_in(-1.0, 1.0)).collect())
            .collect();
        let m = net.output_len();
        let targets: Vec<Vec<f64>> = (0..batch)
            .map(|_| match loss {
                Loss::Quadratic => (0..m).map(|_| stream.uniform_in(-1.0, 1.0)).collect(),
                Loss::CrossEntropySigmoid => {
                    (0..m).map(|_| if stream.bernoulli(0.5) { 1.0 } else { 0.0 }).collect()
                }
                Loss::LogLikelihoodSoftmax => {
                    let mut t = vec![0.0; m];
                    t[stream.below(m)] = 1.0;
                    t
                }
            })
            .collect();
        (inputs, targets)
    }

    /// Reject instances whose finite-difference probe could cross a rectifier
    /// kink or a pool-window tie.
    fn fd_safe(net: &LayeredNet, inputs: &[Vec<f64>]) -> bool {
        let pass = net.forward_batch(inputs, Mode::Train, None, None).unwrap();
        for (index, layer) in net.layers().iter().enumerate() {
            if matches!(layer.activation, Activation::Relu | Activation::LeakyRelu) {
                for fields in &pass.layer(index).fields {
                    if fields.iter().any(|b| b.abs() < 1e-3) {
                        return false;
                    }
                }
            }
            if matches!(layer.kind, LayerKind::MaxPool { .. }) {
                let shape = net.layer_input_shape(index);
                let prev: Vec<Vec<f64>> = if index == 0 {
                    inputs.to_vec()
                } else {
                    pass.layer(index - 1).outputs.clone()
                };
                let LayerKind::MaxPool { rows, cols, stride } = layer.kind else { unreachable!() };
                for x in &prev {
                    for c in 0..shape.channels {
                        let mut i = 0;
                        while i * stride + rows <= shape.height {
                            let mut j = 0;
                            while j * stride + cols <= shape.width {
                                let mut window: Vec<f64> = Vec::new();
                                for p in 0..rows {
                                    for q in 0..cols {
                                        window.push(
                                            x[(c * shape.height + i * stride + p) * shape.width
                                                + j * stride
                                                + q],
                                        );
                                    }
                                }
                                window.sort_by(|a, b| b.partial_cmp(a).unwrap());
                                if window.len() > 1 && window[0] - window[1] < 1e-3 {
                                    return false;
                                }
                                j += 1;
                            }
                            i += 1;
                        }
                    }
                }
            }
        }
        true
    }

    fn audit(mut make: impl FnMut(&mut RandomStream) -> LayeredNet, loss: Loss, tol: f64, seed: u64) {
        let mut stream = RandomStream::new(seed);
        let mut done = 0;
        let mut attempts = 0;
        while done < 12 {
            attempts += 1;
            assert!(attempts < 500, "could not generate enough safe instances");
            let net = make(&mut stream);
            let (inputs, targets) = random_batch(&net, 3, loss, &mut stream);
            if !fd_safe(&net, &inputs) {
                continue;
            }
            let dev = max_gradient_deviation(&net, &inputs, &targets, loss, 1e-5).unwrap();
            assert!(dev < tol, "{} audit {done}: deviation {dev}", loss.name());
            done += 1;
        }
    }

    #[test]
    fn gradients_vanish_when_outputs_equal_targets() {
        let mut stream = RandomStream::new(2024);
        let net = LayeredNet::flat(
            3,
            vec![
                random_dense(3, 5, Activation::Tanh, &mut stream),
                random_dense(5, 4, Activation::Softmax, &mut stream),
            ],
        )
        .unwrap();
        let inputs = vec![vec![0.3, -0.2, 0.8], vec![-0.5, 0.1, 0.4]];
        let pass = net.forward_batch(&inputs, Mode::Train, None, None).unwrap();
        let targets: Vec<Vec<f64>> = pass.outputs().to_vec();
        let grads = backprop(&net, &inputs, &targets, Loss::LogLikelihoodSoftmax).unwrap();
        for g in grads.flatten() {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn single_sigmoid_unit_matches_symbolic_derivative() {
        // One input, one sigmoid unit, quadratic cost with target 1:
        // dH/dw = -(1 - s) s (1 - s) x and dH/dtheta = +(1 - s) s (1 - s).
        let w = 0.7;
        let theta = 0.2;
        let x = 1.3;
        let layer = Layer::dense_from(
            Matrix::from_rows(&[vec![w]]),
            vec![theta],
            Activation::Sigmoid,
        )
        .unwrap();
        let net = LayeredNet::flat(1, vec![layer]).unwrap();
        let grads = backprop(&net, &[vec![x]], &[vec![1.0]], Loss::Quadratic).unwrap();
        let s = 1.0 / (1.0 + (-(w * x - theta)).exp());
        let expect_w = -(1.0 - s) * s * (1.0 - s) * x;
        let expect_t = (1.0 - s) * s * (1.0 - s);
        let flat = grads.flatten();
        assert!((flat[0] - expect_w).abs() < 1e-14);
        assert!((flat[1] - expect_t).abs() < 1e-14);
    }

    #[test]
    fn paired_losses_reduce_output_error_to_target_gap() {
        // For both paired costs the output field error is O - t, so the
        // output thresholds receive gradient -sum_mu (O - t).
        let mut stream = RandomStream::new(4711);
        for loss in [Loss::LogLikelihoodSoftmax, Loss::CrossEntropySigmoid] {
            let out_act = match loss {
                Loss::LogLikelihoodSoftmax => Activation::Softmax,
                _ => Activation::Sigmoid,
            };
            let net = LayeredNet::flat(
                2,
                vec![
                    random_dense(2, 4, Activation::Tanh, &mut stream),
                    random_dense(4, 3, out_act, &mut stream),
                ],
            )
            .unwrap();
            let (inputs, targets) = random_batch(&net, 4, loss, &mut stream);
            let pass = net.forward_batch(&inputs, Mode::Train, None, None).unwrap();
            let grads = backprop(&net, &inputs, &targets, loss).unwrap();
            let LayerGradients::Dense { thresholds, .. } = &grads.layers[1] else {
                unreachable!()
            };
            for m in 0..3 {
                let mut want = 0.0;
                for (o, t) in pass.outputs().iter().zip(&targets) {
                    want -= o[m] - t[m];
                }
                assert!((thresholds[m] - want).abs() < 1e-12, "{}", loss.name());
            }
        }
    }

    #[test]
    fn mismatched_loss_and_output_activation_is_rejected() {
        let mut stream = RandomStream::new(7);
        let tanh_out = LayeredNet::flat(2, vec![random_dense(2, 2, Activation::Tanh, &mut stream)]).unwrap();
        let softmax_out =
            LayeredNet::flat(2, vec![random_dense(2, 2, Activation::Softmax, &mut stream)]).unwrap();
        let x = vec![vec![0.1, 0.2]];
        let t = vec![vec![1.0, 0.0]];
        assert!(matches!(
            backprop(&softmax_out, &x, &t, Loss::Quadratic),
            Err(NetError::InvalidPairing { .. })
        ));
        assert!(matches!(
            backprop(&tanh_out, &x, &t, Loss::LogLikelihoodSoftmax),
            Err(NetError::InvalidPairing { .. })
        ));
        assert!(matches!(
            backprop(&tanh_out, &x, &t, Loss::CrossEntropySigmoid),
            Err(NetError::InvalidPairing { .. })
        ));
    }

    #[test]
    fn step_and_sign_networks_are_rejected_by_gradients() {
        let net = crate::feedforward::xor_reference();
        let x = vec![vec![0.0, 1.0]];
        let t = vec![vec![1.0]];
        assert!(matches!(
            backprop(&net, &x, &t, Loss::Quadratic),
            Err(NetError::NonDifferentiable { .. })
        ));
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        for (loss, out_act, seed) in [
            (Loss::Quadratic, Activation::Tanh, 11u64),
            (Loss::LogLikelihoodSoftmax, Activation::Softmax, 12),
            (Loss::CrossEntropySigmoid, Activation::Sigmoid, 13),
        ] {
            audit(
                |s| {
                    LayeredNet::flat(
                        3,
                        vec![
                            random_dense(3, 5, Activation::Tanh, s),
                            random_dense(5, 4, Activation::Sigmoid, s),
                            random_dense(4, 3, out_act, s),
                        ],
                    )
                    .unwrap()
                },
                loss,
                1e-6,
                seed,
            );
        }
    }

    #[test]
    fn relu_gradients_match_finite_differences_off_the_kink() {
        for (hidden, seed) in [(Activation::Relu, 21u64), (Activation::LeakyRelu, 22)] {
            audit(
                |s| {
                    LayeredNet::flat(
                        3,
                        vec![
                            random_dense(3, 6, hidden, s),
                            random_dense(6, 2, Activation::Sigmoid, s),
                        ],
                    )
                    .unwrap()
                },
                Loss::Quadratic,
                1e-5,
                seed,
            );
        }
    }

    #[test]
    fn convolution_gradients_match_finite_differences() {
        for (loss, out_act, seed) in [
            (Loss::Quadratic, Activation::Identity, 31u64),
            (Loss::LogLikelihoodSoftmax, Activation::Softmax, 32),
            (Loss::CrossEntropySigmoid, Activation::Sigmoid, 33),
        ] {
            audit(
                |s| {
                    let mut conv =
                        Layer::convolution(1, 2, 3, 3, 1, 1, Activation::Tanh).unwrap();
                    if let LayerKind::Convolution { kernel, thresholds, .. } = &mut conv.kind {
                        for k in kernel.iter_mut() {
                            *k = 0.6 * s.gaussian();
                        }
                        for t in thresholds.iter_mut() {
                            *t = 0.2 * s.gaussian();
                        }
                    }
                    LayeredNet::new(
                        Shape::grid(1, 4, 4),
                        vec![conv, random_dense(2 * 4 * 4, 3, out_act, s)],
                    )
                    .unwrap()
                },
                loss,
                1e-6,
                seed,
            );
        }
    }

    #[test]
    fn maxpool_gradients_match_finite_differences() {
        for (loss, out_act, seed) in [
            (Loss::Quadratic, Activation::Tanh, 41u64),
            (Loss::LogLikelihoodSoftmax, Activation::Softmax, 42),
            (Loss::CrossEntropySigmoid, Activation::Sigmoid, 43),
        ] {
            audit(
                |s| {
                    let mut conv =
                        Layer::convolution(1, 2, 2, 2, 1, 0, Activation::Tanh).unwrap();
                    if let LayerKind::Convolution { kernel, .. } = &mut conv.kind {
                        for k in kernel.iter_mut() {
                            *k = 0.9 * s.gaussian();
                        }
                    }
                    LayeredNet::new(
                        Shape::grid(1, 5, 5),
                        vec![
                            conv,
                            Layer::maxpool(2, 2, 2).unwrap(),
                            random_dense(2 * 2 * 2, 2, out_act, s),
                        ],
                    )
                    .unwrap()
                },
                loss,
                1e-6,
                seed,
            );
        }
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        for (loss, out_act, seed) in [
            (Loss::Quadratic, Activation::Tanh, 51u64),
            (Loss::LogLikelihoodSoftmax, Activation::Softmax, 52),
            (Loss::CrossEntropySigmoid, Activation::Sigmoid, 53),
        ] {
            audit(
                |s| {
                    let mut bn = Layer::batchnorm(5, 1e-3, Activation::Tanh).unwrap();
                    if let LayerKind::BatchNorm { gamma, beta, .. } = &mut bn.kind {
                        for g in gamma.iter_mut() {
                            *g = 1.0 + 0.3 * s.gaussian();
                        }
                        for b in beta.iter_mut() {
                            *b = 0.3 * s.gaussian();
                        }
                    }
                    LayeredNet::flat(
                        3,
                        vec![
                            random_dense(3, 5, Activation::Identity, s),
                            bn,
                            random_dense(5, 2, out_act, s),
                        ],
                    )
                    .unwrap()
                },
                loss,
                1e-6,
                seed,
            );
        }
    }

    #[test]
    fn dropout_masked_units_receive_zero_gradient() {
        let mut stream = RandomStream::new(600);
        let net = LayeredNet::flat(
            2,
            vec![
                random_dense(2, 10, Activation::Tanh, &mut stream),
                random_dense(10, 1, Activation::Sigmoid, &mut stream),
            ],
        )
        .unwrap();
        let inputs = vec![vec![0.4, -0.6]];
        let targets = vec![vec![1.0]];
        let mut s = RandomStream::new(9001);
        let pass = net
            .forward_batch(&inputs, Mode::Train, Some(0.5), Some(&mut s))
            .unwrap();
        let grads = backprop_pass(&net, &pass, &targets, Loss::Quadratic).unwrap();
        let mask = pass.masks[0].as_ref().unwrap().clone();
        assert!(mask.iter().any(|&m| m == 0.0), "seed should drop a unit");
        let LayerGradients::Dense { weights, thresholds } = &grads.layers[0] else {
            unreachable!()
        };
        for (j, m) in mask.iter().enumerate() {
            if *m == 0.0 {
                assert_eq!(thresholds[j], 0.0);
                for n in 0..2 {
                    assert_eq!(weights[(j, n)], 0.0);
                }
            }
        }
    }
}
