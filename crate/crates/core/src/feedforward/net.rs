//! Layer composition, the batched forward pass, and parameter flattening.

use super::activation::Activation;
use super::layers::{update_running, Layer, LayerKind};
use super::{Mode, NetError};
use crate::numerics::RandomStream;

/// Geometry of the data flowing between layers. Dense layers see the flat
/// length; convolution and pooling interpret channels and grid extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn flat(len: usize) -> Shape {
        Shape {
            channels: 1,
            height: 1,
            width: len,
        }
    }

    pub fn grid(channels: usize, height: usize, width: usize) -> Shape {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which role a flattened parameter plays. Decay, max-norm caps and pruning
/// act on `Weight` entries only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Threshold,
    Gamma,
    Beta,
}

#[derive(Clone, Debug)]
pub(crate) enum TraceCache {
    None,
    Pool {
        argmax: Vec<Vec<usize>>,
    },
    BatchNorm {
        xhat: Vec<Vec<f64>>,
        centered: Vec<Vec<f64>>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

/// Record of one layer's forward pass over a batch: local fields and
/// activations per pattern, plus caches the backward pass needs.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub fields: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub(crate) cache: TraceCache,
}

/// Full forward trace over a batch. Outputs are post-activation and, in
/// training mode with dropout, post-mask.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub(crate) inputs: Vec<Vec<f64>>,
    pub(crate) traces: Vec<LayerTrace>,
    pub(crate) masks: Vec<Option<Vec<f64>>>,
}

impl ForwardPass {
    /// Final-layer outputs, one vector per pattern.
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.traces.last().unwrap().outputs
    }

    /// Trace of layer `index` (0 = first hidden computation).
    pub fn layer(&self, index: usize) -> &LayerTrace {
        &self.traces[index]
    }

    /// Final output of the only pattern in a single-pattern pass.
    pub fn output_single(&self) -> &[f64] {
        assert_eq!(self.inputs.len(), 1, "pass holds more than one pattern");
        &self.outputs()[0]
    }

    pub fn batch_len(&self) -> usize {
        self.inputs.len()
    }
}

/// A feed-forward network: an input shape and a validated stack of layers.
#[derive(Clone, Debug)]
pub struct LayeredNet {
    input_shape: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
}

impl LayeredNet {
    /// Validate layer composition: shapes must chain, softmax may appear
    /// only as the activation of a final dense layer, and max-pool layers
    /// must carry the identity activation.
    pub fn new(input_shape: Shape, layers: Vec<Layer>) -> Result<LayeredNet, NetError> {
        if layers.is_empty() {
            return Err(NetError::EmptyNet);
        }
        if input_shape.is_empty() {
            return Err(NetError::BadConfig("input shape has zero length".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape;
        for (index, layer) in layers.iter().enumerate() {
            if layer.activation == Activation::Softmax {
                let final_dense = index == layers.len() - 1
                    && matches!(layer.kind, LayerKind::Dense { .. });
                if !final_dense {
                    return Err(NetError::SoftmaxPlacement { layer: index });
                }
            }
            if matches!(layer.kind, LayerKind::MaxPool { .. })
                && layer.activation != Activation::Identity
            {
                return Err(NetError::BadComposition {
                    layer: index,
                    detail: "max-pool layers must use the identity activation".into(),
                });
            }
            current = layer.output_shape(current).map_err(|e| match e {
                NetError::BadComposition { detail, .. } => {
                    NetError::BadComposition { layer: index, detail }
                }
                other => other,
            })?;
            shapes.push(current);
        }
        Ok(LayeredNet {
            input_shape,
            layers,
            shapes,
        })
    }

    /// Network over flat vector inputs.
    pub fn flat(inputs: usize, layers: Vec<Layer>) -> Result<LayeredNet, NetError> {
        LayeredNet::new(Shape::flat(inputs), layers)
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.len()
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().unwrap().len()
    }

    /// Output shape of each layer, in order.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for adjusting parameter values. Changing a layer's
    /// dimensions or kind invalidates the net; rebuild with `new` instead.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Shape of the data entering layer `index`.
    pub fn layer_input_shape(&self, index: usize) -> Shape {
        if index == 0 {
            self.input_shape
        } else {
            self.shapes[index - 1]
        }
    }

    /// Run a batch through the network.
    ///
    /// `dropout_keep` enables dropout on every layer output except the final
    /// one: training mode draws one Bernoulli keep mask per layer per call
    /// (this is the per-minibatch mask) and needs `stream`; inference mode
    /// scales those outputs by the keep probability instead.
    pub fn forward_batch(
        &self,
        inputs: &[Vec<f64>],
        mode: Mode,
        dropout_keep: Option<f64>,
        mut stream: Option<&mut RandomStream>,
    ) -> Result<ForwardPass, NetError> {
        if inputs.is_empty() {
            return Err(NetError::BadConfig("forward pass on an empty batch".into()));
        }
        for x in inputs {
            if x.len() != self.input_len() {
                return Err(NetError::InputSize {
                    expected: self.input_len(),
                    got: x.len(),
                });
            }
        }
        if let Some(p) = dropout_keep {
            if !(p > 0.0 && p <= 1.0) {
                return Err(NetError::BadConfig(format!(
                    "dropout keep probability {p} is outside (0, 1]"
                )));
            }
            if mode == Mode::Train && stream.is_none() {
                return Err(NetError::StreamRequired);
            }
        }

        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        let mut masks: Vec<Option<Vec<f64>>> = vec![None; self.layers.len()];
        for (index, layer) in self.layers.iter().enumerate() {
            let input_shape = self.layer_input_shape(index);
            let current: &[Vec<f64>] = if index == 0 {
                inputs
            } else {
                &traces[index - 1].outputs
            };
            let step = layer.forward_batch(current, input_shape, mode)?;
            let mut trace = LayerTrace {
                fields: step.fields,
                outputs: step.outputs,
                cache: step.cache,
            };
            let hidden = index + 1 < self.layers.len();
            if let (Some(p), true) = (dropout_keep, hidden) {
                match mode {
                    Mode::Train => {
                        let s = stream.as_deref_mut().expect("stream checked above");
                        let width = self.shapes[index].len();
                        let mask: Vec<f64> = (0..width)
                            .map(|_| if s.bernoulli(p) { 1.0 } else { 0.0 })
                            .collect();
                        for out in &mut trace.outputs {
                            for (o, m) in out.iter_mut().zip(&mask) {
                                *o *= m;
                            }
                        }
                        masks[index] = Some(mask);
                    }
                    Mode::Infer => {
                        for out in &mut trace.outputs {
                            for o in out.iter_mut() {
                                *o *= p;
                            }
                        }
                    }
                }
            }
            traces.push(trace);
        }
        Ok(ForwardPass {
            inputs: inputs.to_vec(),
            traces,
            masks,
        })
    }

    /// Fold the batch statistics recorded in a training-mode pass into the
    /// running averages of every batch-norm layer. No-op for passes without
    /// batch-norm caches.
    pub fn absorb_batch_stats(&mut self, pass: &ForwardPass) {
        for (layer, trace) in self.layers.iter_mut().zip(&pass.traces) {
            if let (
                LayerKind::BatchNorm {
                    running_mean,
                    running_var,
                    ..
                },
                TraceCache::BatchNorm { mean, var, .. },
            ) = (&mut layer.kind, &trace.cache)
            {
                update_running(running_mean, mean);
                update_running(running_var, var);
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// All trainable parameters in canonical order: per layer, weights
    /// (row-major) then thresholds, or kernel then thresholds, or gamma
    /// then beta. Running statistics are state, not parameters.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::Dense { weights, thresholds } => {
                    for i in 0..weights.rows() {
                        out.extend_from_slice(weights.row(i));
                    }
                    out.extend_from_slice(thresholds);
                }
                LayerKind::Convolution { kernel, thresholds, .. } => {
                    out.extend_from_slice(kernel);
                    out.extend_from_slice(thresholds);
                }
                LayerKind::MaxPool { .. } => {}
                LayerKind::BatchNorm { gamma, beta, .. } => {
                    out.extend_from_slice(gamma);
                    out.extend_from_slice(beta);
                }
            }
        }
        out
    }

    /// Overwrite all trainable parameters from the canonical flat order.
    ///
    /// Panics when the length does not match `parameter_count`.
    pub fn assign_params(&mut self, params: &[f64]) {
        assert_eq!(
            params.len(),
            self.parameter_count(),
            "parameter vector length mismatch"
        );
        let mut at = 0usize;
        for layer in &mut self.layers {
            match &mut layer.kind {
                LayerKind::Dense { weights, thresholds } => {
                    for i in 0..weights.rows() {
                        let cols = weights.cols();
                        weights.row_mut(i).copy_from_slice(&params[at..at + cols]);
                        at += cols;
                    }
                    let len = thresholds.len();
                    thresholds.copy_from_slice(&params[at..at + len]);
                    at += len;
                }
                LayerKind::Convolution { kernel, thresholds, .. } => {
                    let len = kernel.len();
                    kernel.copy_from_slice(&params[at..at + len]);
                    at += len;
                    let len = thresholds.len();
                    thresholds.copy_from_slice(&params[at..at + len]);
                    at += len;
                }
                LayerKind::MaxPool { .. } => {}
                LayerKind::BatchNorm { gamma, beta, .. } => {
                    let len = gamma.len();
                    gamma.copy_from_slice(&params[at..at + len]);
                    at += len;
                    let len = beta.len();
                    beta.copy_from_slice(&params[at..at + len]);
                    at += len;
                }
            }
        }
        debug_assert_eq!(at, params.len());
    }

    /// Role of each flattened parameter, aligned with `flatten_params`.
    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::Dense { weights, thresholds } => {
                    out.extend(std::iter::repeat(ParamKind::Weight).take(weights.rows() * weights.cols()));
                    out.extend(std::iter::repeat(ParamKind::Threshold).take(thresholds.len()));
                }
                LayerKind::Convolution { kernel, thresholds, .. } => {
                    out.extend(std::iter::repeat(ParamKind::Weight).take(kernel.len()));
                    out.extend(std::iter::repeat(ParamKind::Threshold).take(thresholds.len()));
                }
                LayerKind::MaxPool { .. } => {}
                LayerKind::BatchNorm { gamma, beta, .. } => {
                    out.extend(std::iter::repeat(ParamKind::Gamma).take(gamma.len()));
                    out.extend(std::iter::repeat(ParamKind::Beta).take(beta.len()));
                }
            }
        }
        out
    }
}

/// Forward pass of a single pattern without dropout.
pub fn forward(net: &LayeredNet, input: &[f64], mode: Mode) -> Result<ForwardPass, NetError> {
    net.forward_batch(std::slice::from_ref(&input.to_vec()), mode, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedforward::xor_reference;
    use crate::numerics::Matrix;

    fn random_dense(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        stream: &mut RandomStream,
    ) -> Layer {
        let weights = Matrix::from_fn(outputs, inputs, |_, _| stream.gaussian());
        let thresholds = (0..outputs).map(|_| stream.gaussian()).collect();
        Layer::dense_from(weights, thresholds, activation).unwrap()
    }

    #[test]
    fn identity_dense_layer_is_a_matrix_product() {
        let weights = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25], vec![3.0, -1.0]]);
        let layer = Layer::dense_from(weights.clone(), vec![0.0; 3], Activation::Identity).unwrap();
        let net = LayeredNet::flat(2, vec![layer]).unwrap();
        let x = vec![0.7, -1.3];
        let pass = forward(&net, &x, Mode::Infer).unwrap();
        assert_eq!(pass.output_single(), weights.mul_vec(&x).as_slice());
    }

    #[test]
    fn three_layer_tanh_net_matches_nested_oracle() {
        let mut stream = RandomStream::new(0xfeed);
        let sizes = [4usize, 5, 3, 2];
        let layers: Vec<Layer> = (0..3)
            .map(|l| random_dense(sizes[l], sizes[l + 1], Activation::Tanh, &mut stream))
            .collect();
        let net = LayeredNet::flat(4, layers.clone()).unwrap();
        let x: Vec<f64> = (0..4).map(|_| stream.uniform_in(-1.0, 1.0)).collect();
        let pass = forward(&net, &x, Mode::Infer).unwrap();

        // Straight-line evaluation, no shared code with the engine.
        let mut v = x.clone();
        for layer in &layers {
            let LayerKind::Dense { weights, thresholds } = &layer.kind else { unreachable!() };
            let mut next = vec![0.0; weights.rows()];
            for (i, slot) in next.iter_mut().enumerate() {
                let mut b = -thresholds[i];
                for (j, xj) in v.iter().enumerate() {
                    b += weights[(i, j)] * xj;
                }
                *slot = b.tanh();
            }
            v = next;
        }
        for (a, b) in pass.output_single().iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn xor_reference_net_separates_the_plane() {
        let net = xor_reference();
        let cases = [
            ([0.0, 0.0], -1.0),
            ([0.0, 1.0], 1.0),
            ([1.0, 0.0], 1.0),
            ([1.0, 1.0], -1.0),
        ];
        for (x, want) in cases {
            let pass = forward(&net, &x, Mode::Infer).unwrap();
            assert_eq!(pass.output_single(), &[want], "input {x:?}");
        }
        // The hidden trace is exposed: for (1,1) both step units fire.
        let pass = forward(&net, &[1.0, 1.0], Mode::Infer).unwrap();
        assert_eq!(pass.layer(0).outputs[0], vec![1.0, 1.0]);
        assert_eq!(pass.layer(0).fields[0], vec![1.5, 0.5]);
    }

    #[test]
    fn forward_is_pure_under_input_perturbation() {
        // Evaluating other inputs between two identical queries cannot change
        // the answer: there is no hidden state outside batch-norm running
        // averages, and plain forward never touches those.
        let mut stream = RandomStream::new(31);
        let layers = vec![
            random_dense(3, 6, Activation::Tanh, &mut stream),
            random_dense(6, 2, Activation::Sigmoid, &mut stream),
        ];
        let net = LayeredNet::flat(3, layers).unwrap();
        let x = vec![0.2, -0.4, 0.9];
        let first = forward(&net, &x, Mode::Infer).unwrap().output_single().to_vec();
        for k in 0..20 {
            let noise = vec![k as f64, -(k as f64), 0.5 * k as f64];
            forward(&net, &noise, Mode::Infer).unwrap();
        }
        let second = forward(&net, &x, Mode::Infer).unwrap().output_single().to_vec();
        assert_eq!(first, second);
    }

    #[test]
    fn composition_errors_are_reported_with_layer_index() {
        let layers = vec![
            Layer::dense(2, 3, Activation::Tanh),
            Layer::dense(4, 1, Activation::Sigmoid),
        ];
        match LayeredNet::flat(2, layers) {
            Err(NetError::BadComposition { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected composition error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_is_rejected_anywhere_but_the_final_dense_layer() {
        let hidden_softmax = vec![
            Layer::dense(2, 3, Activation::Softmax),
            Layer::dense(3, 2, Activation::Sigmoid),
        ];
        assert!(matches!(
            LayeredNet::flat(2, hidden_softmax),
            Err(NetError::SoftmaxPlacement { layer: 0 })
        ));
        let ok = vec![
            Layer::dense(2, 3, Activation::Tanh),
            Layer::dense(3, 2, Activation::Softmax),
        ];
        assert!(LayeredNet::flat(2, ok).is_ok());
    }

    #[test]
    fn handmade_maxpool_with_activation_is_rejected() {
        let mut pool = Layer::maxpool(2, 2, 2).unwrap();
        pool.activation = Activation::Tanh;
        assert!(matches!(
            LayeredNet::new(Shape::grid(1, 4, 4), vec![pool]),
            Err(NetError::BadComposition { layer: 0, .. })
        ));
    }

    #[test]
    fn params_roundtrip_and_kinds_align() {
        let mut stream = RandomStream::new(77);
        let conv = Layer::convolution(1, 2, 2, 2, 1, 0, Activation::Relu).unwrap();
        let bn = Layer::batchnorm(2 * 3 * 3, 1e-8, Activation::Tanh).unwrap();
        let pool = Layer::maxpool(2, 2, 1).unwrap();
        let dense = random_dense(8, 4, Activation::Sigmoid, &mut stream);
        let net = LayeredNet::new(
            Shape::grid(1, 4, 4),
            vec![conv, bn, pool, dense],
        )
        .unwrap();

        let kinds = net.param_kinds();
        let params = net.flatten_params();
        assert_eq!(params.len(), net.parameter_count());
        assert_eq!(kinds.len(), params.len());
        // conv: 8 kernel weights + 2 thresholds; bn: 18 gammas + 18 betas;
        // dense on the pooled 2x2x2 grid: 32 weights + 4 thresholds.
        assert_eq!(params.len(), 8 + 2 + 18 + 18 + 32 + 4);
        assert_eq!(kinds.iter().filter(|k| **k == ParamKind::Weight).count(), 40);
        assert_eq!(kinds.iter().filter(|k| **k == ParamKind::Gamma).count(), 18);

        let mut net2 = net.clone();
        let mutated: Vec<f64> = params.iter().map(|p| p + 1.0).collect();
        net2.assign_params(&mutated);
        assert_eq!(net2.flatten_params(), mutated);
        // Reassigning the originals restores the net exactly.
        net2.assign_params(&params);
        assert_eq!(net2.flatten_params(), params);
    }

    #[test]
    fn dropout_train_masks_and_infer_scales() {
        let mut stream = RandomStream::new(123);
        let l1 = random_dense(2, 40, Activation::Tanh, &mut stream);
        let l2 = random_dense(40, 1, Activation::Identity, &mut stream);
        let net = LayeredNet::flat(2, vec![l1, l2]).unwrap();
        let x = vec![vec![0.3, -0.8]];

        let mut s = RandomStream::new(9);
        let pass = net
            .forward_batch(&x, Mode::Train, Some(0.5), Some(&mut s))
            .unwrap();
        let hidden = &pass.layer(0).outputs[0];
        let zeros = hidden.iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 5 && zeros < 35, "mask should drop roughly half, dropped {zeros}");

        // Inference with the same keep probability scales deterministically.
        let plain = net.forward_batch(&x, Mode::Infer, None, None).unwrap();
        let scaled = net.forward_batch(&x, Mode::Infer, Some(0.5), None).unwrap();
        for (a, b) in plain.layer(0).outputs[0].iter().zip(&scaled.layer(0).outputs[0]) {
            assert!((0.5 * a - b).abs() < 1e-15);
        }

        // Train mode without a stream is an error.
        assert!(matches!(
            net.forward_batch(&x, Mode::Train, Some(0.5), None),
            Err(NetError::StreamRequired)
        ));
    }

    #[test]
    fn dropout_mask_is_shared_across_the_minibatch() {
        let mut stream = RandomStream::new(5);
        let l1 = random_dense(1, 30, Activation::Identity, &mut stream);
        let l2 = random_dense(30, 1, Activation::Identity, &mut stream);
        let net = LayeredNet::flat(1, vec![l1, l2]).unwrap();
        let batch = vec![vec![1.0], vec![2.0], vec![3.0]];
        let mut s = RandomStream::new(42);
        let pass = net
            .forward_batch(&batch, Mode::Train, Some(0.5), Some(&mut s))
            .unwrap();
        // A unit dropped for one pattern is dropped for all patterns.
        let hidden = &pass.layer(0).outputs;
        for j in 0..30 {
            let dropped: Vec<bool> = hidden.iter().map(|h| h[j] == 0.0).collect();
            assert!(dropped.iter().all(|&d| d == dropped[0]), "unit {j} mask differs");
        }
    }

    #[test]
    fn dropout_infer_matches_mask_average_on_a_linear_net() {
        // For a linear read-out of masked units, the inference-mode scaling
        // equals the average over masks of the training-mode output.
        let mut stream = RandomStream::new(808);
        let l1 = random_dense(3, 20, Activation::Tanh, &mut stream);
        let l2 = random_dense(20, 1, Activation::Identity, &mut stream);
        let net = LayeredNet::flat(3, vec![l1, l2]).unwrap();
        let x = vec![vec![0.4, -0.2, 0.7]];
        let p = 0.7;

        let scaled = net.forward_batch(&x, Mode::Infer, Some(p), None).unwrap();
        let want = scaled.outputs()[0][0];

        let mut s = RandomStream::new(99);
        let draws = 10_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let pass = net.forward_batch(&x, Mode::Train, Some(p), Some(&mut s)).unwrap();
            let o = pass.outputs()[0][0];
            sum += o;
            sum_sq += o * o;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
        let sigma = (var / draws as f64).sqrt();
        // The linear output layer sees the masked tanh units directly, but a
        // threshold offsets both modes identically, so means agree within 3 sigma.
        assert!(
            (mean - want).abs() < 3.0 * sigma + 1e-12,
            "masked mean {mean} vs scaled {want} (sigma {sigma})"
        );
    }

    #[test]
    fn batchnorm_running_stats_absorb_with_decay() {
        let bn = Layer::batchnorm(1, 1e-8, Activation::Identity).unwrap();
        let mut net = LayeredNet::flat(1, vec![bn, Layer::dense(1, 1, Activation::Identity)]).unwrap();
        let batch = vec![vec![10.0], vec![14.0]];
        let pass = net.forward_batch(&batch, Mode::Train, None, None).unwrap();
        net.absorb_batch_stats(&pass);
        let LayerKind::BatchNorm { running_mean, running_var, .. } = &net.layers()[0].kind else {
            unreachable!()
        };
        assert!((running_mean[0] - 1.2).abs() < 1e-12);
        assert!((running_var[0] - 1.3).abs() < 1e-12);
        // Infer mode never absorbs anything.
        let pass = net.forward_batch(&batch, Mode::Infer, None, None).unwrap();
        net.absorb_batch_stats(&pass);
        let LayerKind::BatchNorm { running_mean, .. } = &net.layers()[0].kind else {
            unreachable!()
        };
        assert!((running_mean[0] - 1.2).abs() < 1e-12);
    }
}
