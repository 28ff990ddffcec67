//! Layer kinds: dense, convolution, max-pool and batch normalization.

use super::activation::{softmax, Activation, SoftmaxScale};
use super::net::{Shape, TraceCache};
use super::{Mode, NetError};
use crate::numerics::Matrix;

/// One layer: a parameterized map from the previous layer's outputs to local
/// fields, followed by an activation.
///
/// Shape invariants (weight dimensions versus layer widths) are checked when
/// a [`super::LayeredNet`] is assembled; afterwards only parameter values
/// should be mutated.
#[derive(Clone, Debug)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub enum LayerKind {
    /// Fully connected: b = W x - theta.
    Dense {
        weights: Matrix,
        thresholds: Vec<f64>,
    },
    /// Local receptive fields with shared kernels, one threshold per output
    /// map. The kernel is stored flat, indexed by (map, channel, row, col).
    Convolution {
        kernel: Vec<f64>,
        maps: usize,
        in_channels: usize,
        k_rows: usize,
        k_cols: usize,
        stride: usize,
        padding: usize,
        thresholds: Vec<f64>,
    },
    /// Block maxima per channel; no parameters. Activation must be identity.
    MaxPool {
        rows: usize,
        cols: usize,
        stride: usize,
    },
    /// Per-unit standardization with learned scale and shift. Training mode
    /// uses minibatch statistics; inference mode uses running averages.
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        epsilon: f64,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

impl Layer {
    /// Dense layer with zero weights and thresholds.
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Layer {
        Layer {
            kind: LayerKind::Dense {
                weights: Matrix::zeros(outputs, inputs),
                thresholds: vec![0.0; outputs],
            },
            activation,
        }
    }

    /// Dense layer from explicit parameters.
    pub fn dense_from(
        weights: Matrix,
        thresholds: Vec<f64>,
        activation: Activation,
    ) -> Result<Layer, NetError> {
        if thresholds.len() != weights.rows() {
            return Err(NetError::CountMismatch {
                context: "dense thresholds",
                expected: weights.rows(),
                got: thresholds.len(),
            });
        }
        Ok(Layer {
            kind: LayerKind::Dense { weights, thresholds },
            activation,
        })
    }

    /// Convolution layer with a zero kernel and zero thresholds.
    pub fn convolution(
        in_channels: usize,
        maps: usize,
        k_rows: usize,
        k_cols: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    ) -> Result<Layer, NetError> {
        if in_channels == 0 || maps == 0 || k_rows == 0 || k_cols == 0 {
            return Err(NetError::BadConfig(
                "convolution needs nonzero channels, maps and kernel size".into(),
            ));
        }
        if stride == 0 {
            return Err(NetError::BadConfig("convolution stride must be at least 1".into()));
        }
        Ok(Layer {
            kind: LayerKind::Convolution {
                kernel: vec![0.0; maps * in_channels * k_rows * k_cols],
                maps,
                in_channels,
                k_rows,
                k_cols,
                stride,
                padding,
                thresholds: vec![0.0; maps],
            },
            activation,
        })
    }

    /// Max-pool layer; the activation is fixed to identity.
    pub fn maxpool(rows: usize, cols: usize, stride: usize) -> Result<Layer, NetError> {
        if rows == 0 || cols == 0 || stride == 0 {
            return Err(NetError::BadConfig("pool window and stride must be at least 1".into()));
        }
        Ok(Layer {
            kind: LayerKind::MaxPool { rows, cols, stride },
            activation: Activation::Identity,
        })
    }

    /// Batch-norm layer over `units` components: scale one, shift zero,
    /// running statistics reset to mean zero and variance one.
    pub fn batchnorm(units: usize, epsilon: f64, activation: Activation) -> Result<Layer, NetError> {
        if units == 0 {
            return Err(NetError::BadConfig("batch norm needs at least one unit".into()));
        }
        if !(epsilon > 0.0) {
            return Err(NetError::BadConfig("batch norm epsilon must be positive".into()));
        }
        Ok(Layer {
            kind: LayerKind::BatchNorm {
                gamma: vec![1.0; units],
                beta: vec![0.0; units],
                epsilon,
                running_mean: vec![0.0; units],
                running_var: vec![1.0; units],
            },
            activation,
        })
    }

    /// Output shape produced from `input`, or why the composition is invalid.
    pub fn output_shape(&self, input: Shape) -> Result<Shape, NetError> {
        match &self.kind {
            LayerKind::Dense { weights, .. } => {
                if weights.cols() != input.len() {
                    return Err(NetError::BadComposition {
                        layer: 0,
                        detail: format!(
                            "dense layer expects {} inputs, previous layer provides {}",
                            weights.cols(),
                            input.len()
                        ),
                    });
                }
                Ok(Shape::flat(weights.rows()))
            }
            LayerKind::Convolution {
                maps,
                in_channels,
                k_rows,
                k_cols,
                stride,
                padding,
                ..
            } => {
                if input.channels != *in_channels {
                    return Err(NetError::BadComposition {
                        layer: 0,
                        detail: format!(
                            "convolution expects {} channels, previous layer provides {}",
                            in_channels, input.channels
                        ),
                    });
                }
                let out_h = conv_extent(input.height, *k_rows, *stride, *padding)?;
                let out_w = conv_extent(input.width, *k_cols, *stride, *padding)?;
                Ok(Shape::grid(*maps, out_h, out_w))
            }
            LayerKind::MaxPool { rows, cols, stride } => {
                let out_h = conv_extent(input.height, *rows, *stride, 0)?;
                let out_w = conv_extent(input.width, *cols, *stride, 0)?;
                Ok(Shape::grid(input.channels, out_h, out_w))
            }
            LayerKind::BatchNorm { gamma, .. } => {
                if gamma.len() != input.len() {
                    return Err(NetError::BadComposition {
                        layer: 0,
                        detail: format!(
                            "batch norm spans {} units, previous layer provides {}",
                            gamma.len(),
                            input.len()
                        ),
                    });
                }
                Ok(input)
            }
        }
    }

    /// Number of trainable parameters.
    pub fn parameter_count(&self) -> usize {
        match &self.kind {
            LayerKind::Dense { weights, thresholds } => {
                weights.rows() * weights.cols() + thresholds.len()
            }
            LayerKind::Convolution { kernel, thresholds, .. } => kernel.len() + thresholds.len(),
            LayerKind::MaxPool { .. } => 0,
            LayerKind::BatchNorm { gamma, beta, .. } => gamma.len() + beta.len(),
        }
    }

    /// Fan-in seen by each unit, used to scale initial weights. Zero for
    /// parameterless layers.
    pub fn fan_in(&self, input: Shape) -> usize {
        match &self.kind {
            LayerKind::Dense { .. } => input.len(),
            LayerKind::Convolution {
                in_channels,
                k_rows,
                k_cols,
                ..
            } => in_channels * k_rows * k_cols,
            LayerKind::MaxPool { .. } | LayerKind::BatchNorm { .. } => 0,
        }
    }

    /// Batch forward pass: local fields, activations and backward caches.
    pub(crate) fn forward_batch(
        &self,
        inputs: &[Vec<f64>],
        input_shape: Shape,
        mode: Mode,
    ) -> Result<LayerForward, NetError> {
        match &self.kind {
            LayerKind::Dense { weights, thresholds } => {
                let mut fields = Vec::with_capacity(inputs.len());
                for x in inputs {
                    let mut b = weights.mul_vec(x);
                    for (bm, theta) in b.iter_mut().zip(thresholds) {
                        *bm -= theta;
                    }
                    fields.push(b);
                }
                let outputs = activate_batch(self.activation, &fields);
                Ok(LayerForward {
                    fields,
                    outputs,
                    cache: TraceCache::None,
                })
            }
            LayerKind::Convolution { .. } => {
                let mut fields = Vec::with_capacity(inputs.len());
                for x in inputs {
                    fields.push(self.conv_fields(x, input_shape)?);
                }
                let outputs = activate_batch(self.activation, &fields);
                Ok(LayerForward {
                    fields,
                    outputs,
                    cache: TraceCache::None,
                })
            }
            LayerKind::MaxPool { .. } => {
                let mut fields = Vec::with_capacity(inputs.len());
                let mut argmax = Vec::with_capacity(inputs.len());
                for x in inputs {
                    let (v, arg) = self.pool_fields(x, input_shape)?;
                    fields.push(v);
                    argmax.push(arg);
                }
                Ok(LayerForward {
                    outputs: fields.clone(),
                    fields,
                    cache: TraceCache::Pool { argmax },
                })
            }
            LayerKind::BatchNorm {
                gamma,
                beta,
                epsilon,
                running_mean,
                running_var,
            } => match mode {
                Mode::Train => {
                    if inputs.len() < 2 {
                        return Err(NetError::BatchTooSmall { got: inputs.len() });
                    }
                    let stats = bn_batch_stats(inputs, *epsilon);
                    let (fields, xhat, centered) = bn_fields(gamma, beta, &stats, inputs);
                    let outputs = activate_batch(self.activation, &fields);
                    Ok(LayerForward {
                        fields,
                        outputs,
                        cache: TraceCache::BatchNorm {
                            xhat,
                            centered,
                            inv_std: stats.inv_std,
                            mean: stats.mean,
                            var: stats.var,
                        },
                    })
                }
                Mode::Infer => {
                    let stats = BnStats::from_running(running_mean, running_var, *epsilon);
                    let (fields, _, _) = bn_fields(gamma, beta, &stats, inputs);
                    let outputs = activate_batch(self.activation, &fields);
                    Ok(LayerForward {
                        fields,
                        outputs,
                        cache: TraceCache::None,
                    })
                }
            },
        }
    }

    /// Convolution fields for one pattern: cross-correlation of the padded
    /// input grid with each map's kernel, minus the map threshold.
    fn conv_fields(&self, x: &[f64], input_shape: Shape) -> Result<Vec<f64>, NetError> {
        let LayerKind::Convolution {
            kernel,
            maps,
            in_channels,
            k_rows,
            k_cols,
            stride,
            padding,
            thresholds,
        } = &self.kind
        else {
            unreachable!()
        };
        let out = self.output_shape(input_shape)?;
        let (h, w) = (input_shape.height, input_shape.width);
        let mut fields = vec![0.0; out.len()];
        for m in 0..*maps {
            for i in 0..out.height {
                for j in 0..out.width {
                    let mut acc = -thresholds[m];
                    for c in 0..*in_channels {
                        for p in 0..*k_rows {
                            let Some(row) = (i * stride + p).checked_sub(*padding) else {
                                continue;
                            };
                            if row >= h {
                                continue;
                            }
                            for q in 0..*k_cols {
                                let Some(col) = (j * stride + q).checked_sub(*padding) else {
                                    continue;
                                };
                                if col >= w {
                                    continue;
                                }
                                let k = ((m * in_channels + c) * k_rows + p) * k_cols + q;
                                acc += kernel[k] * x[(c * h + row) * w + col];
                            }
                        }
                    }
                    fields[(m * out.height + i) * out.width + j] = acc;
                }
            }
        }
        Ok(fields)
    }

    /// Pool maxima for one pattern, with the flat input index of each
    /// maximum for gradient routing. Ties keep the first element scanned.
    fn pool_fields(&self, x: &[f64], input_shape: Shape) -> Result<(Vec<f64>, Vec<usize>), NetError> {
        let LayerKind::MaxPool { rows, cols, stride } = &self.kind else {
            unreachable!()
        };
        let out = self.output_shape(input_shape)?;
        let (h, w) = (input_shape.height, input_shape.width);
        let mut values = vec![0.0; out.len()];
        let mut argmax = vec![0usize; out.len()];
        for c in 0..input_shape.channels {
            for i in 0..out.height {
                for j in 0..out.width {
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = 0usize;
                    for p in 0..*rows {
                        for q in 0..*cols {
                            let idx = (c * h + i * stride + p) * w + j * stride + q;
                            if x[idx] > best {
                                best = x[idx];
                                arg = idx;
                            }
                        }
                    }
                    let cell = (c * out.height + i) * out.width + j;
                    values[cell] = best;
                    argmax[cell] = arg;
                }
            }
        }
        Ok((values, argmax))
    }
}

/// Apply an activation to every field of every pattern.
fn activate_batch(activation: Activation, fields: &[Vec<f64>]) -> Vec<Vec<f64>> {
    fields
        .iter()
        .map(|b| match activation {
            Activation::Softmax => softmax(b, SoftmaxScale::Alpha(1.0)),
            g => b.iter().map(|&bi| g.value(bi)).collect(),
        })
        .collect()
}

/// Output extent of a windowed scan: the window must fit and the stride must
/// place it flush with the far edge.
fn conv_extent(extent: usize, window: usize, stride: usize, padding: usize) -> Result<usize, NetError> {
    let padded = extent + 2 * padding;
    if padded < window {
        return Err(NetError::BadComposition {
            layer: 0,
            detail: format!("window {window} exceeds padded extent {padded}"),
        });
    }
    if (padded - window) % stride != 0 {
        return Err(NetError::BadComposition {
            layer: 0,
            detail: format!(
                "stride {stride} does not tile extent {padded} with window {window}"
            ),
        });
    }
    Ok((padded - window) / stride + 1)
}

pub(crate) struct LayerForward {
    pub fields: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub cache: TraceCache,
}

pub(crate) struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl BnStats {
    fn from_running(mean: &[f64], var: &[f64], epsilon: f64) -> BnStats {
        BnStats {
            mean: mean.to_vec(),
            var: var.to_vec(),
            inv_std: var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect(),
        }
    }
}

/// Per-unit minibatch mean and biased variance.
pub(crate) fn bn_batch_stats(batch: &[Vec<f64>], epsilon: f64) -> BnStats {
    let n = batch.len() as f64;
    let units = batch[0].len();
    let mut mean = vec![0.0; units];
    for x in batch {
        for (m, xi) in mean.iter_mut().zip(x) {
            *m += xi;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; units];
    for x in batch {
        for j in 0..units {
            let d = x[j] - mean[j];
            var[j] += d * d;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    let inv_std = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
    BnStats { mean, var, inv_std }
}

/// Standardize, scale and shift: y = gamma xhat + beta. Returns fields,
/// xhat and the centered inputs (the latter two feed the backward pass).
fn bn_fields(
    gamma: &[f64],
    beta: &[f64],
    stats: &BnStats,
    batch: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut fields = Vec::with_capacity(batch.len());
    let mut xhats = Vec::with_capacity(batch.len());
    let mut centereds = Vec::with_capacity(batch.len());
    for x in batch {
        let centered: Vec<f64> = x.iter().zip(&stats.mean).map(|(xi, m)| xi - m).collect();
        let xhat: Vec<f64> = centered
            .iter()
            .zip(&stats.inv_std)
            .map(|(c, s)| c * s)
            .collect();
        let y: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(j, xh)| gamma[j] * xh + beta[j])
            .collect();
        fields.push(y);
        xhats.push(xhat);
        centereds.push(centered);
    }
    (fields, xhats, centereds)
}

/// Forward pass of a convolution or max-pool layer over one input grid.
/// Returns the activations and their shape.
pub fn conv_forward(
    layer: &Layer,
    input: &[f64],
    input_shape: Shape,
) -> Result<(Vec<f64>, Shape), NetError> {
    match layer.kind {
        LayerKind::Convolution { .. } | LayerKind::MaxPool { .. } => {}
        _ => return Err(NetError::WrongKind { expected: "convolution or max-pool" }),
    }
    if input.len() != input_shape.len() {
        return Err(NetError::InputSize {
            expected: input_shape.len(),
            got: input.len(),
        });
    }
    let shape = layer.output_shape(input_shape)?;
    let pass = layer.forward_batch(std::slice::from_ref(&input.to_vec()), input_shape, Mode::Infer)?;
    Ok((pass.outputs.into_iter().next().unwrap(), shape))
}

/// Forward pass of a batch-norm layer over a minibatch.
///
/// Training mode standardizes with minibatch statistics and folds them into
/// the running averages with decay 0.9; inference mode uses the running
/// averages unchanged. Training needs at least two patterns.
pub fn batchnorm_forward(
    layer: &mut Layer,
    batch: &[Vec<f64>],
    mode: Mode,
) -> Result<Vec<Vec<f64>>, NetError> {
    let LayerKind::BatchNorm { gamma, .. } = &layer.kind else {
        return Err(NetError::WrongKind { expected: "batch-norm" });
    };
    let units = gamma.len();
    if batch.is_empty() {
        return Err(NetError::BadConfig("batch-norm forward on an empty batch".into()));
    }
    for x in batch {
        if x.len() != units {
            return Err(NetError::InputSize {
                expected: units,
                got: x.len(),
            });
        }
    }
    let shape = Shape::flat(units);
    let pass = layer.forward_batch(batch, shape, mode)?;
    if let TraceCache::BatchNorm { mean, var, .. } = &pass.cache {
        let LayerKind::BatchNorm {
            running_mean,
            running_var,
            ..
        } = &mut layer.kind
        else {
            unreachable!()
        };
        update_running(running_mean, mean);
        update_running(running_var, var);
    }
    Ok(pass.outputs)
}

/// Exponential moving average used for batch-norm running statistics.
pub(crate) fn update_running(running: &mut [f64], batch_stat: &[f64]) {
    const DECAY: f64 = 0.9;
    for (r, b) in running.iter_mut().zip(batch_stat) {
        *r = DECAY * *r + (1.0 - DECAY) * b;
    }
}
