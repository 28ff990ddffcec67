//! Minibatch gradient descent with momentum, weight decay, dropout, max-norm
//! caps, early stopping and divergence detection.

use super::backprop::{backprop, backprop_pass, loss_energy, validate_differentiable, Loss};
use super::data::{classification_error, LabeledSet};
use super::layers::LayerKind;
use super::net::{LayeredNet, ParamKind};
use super::{Mode, NetError};
use crate::numerics::RandomStream;

/// How `train` seeds the parameters before the first epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightInit {
    /// Gaussian weights with variance 1 / fan-in, zero thresholds, unit
    /// scales, zero shifts, running statistics reset.
    ScaledGaussian,
    /// Gaussian weights with the given standard deviation; other parameters
    /// reset as above.
    FixedStd(f64),
    /// Use the parameters already in the network.
    Keep,
}

/// Training protocol. Learning rate, momentum and decay act per minibatch;
/// costs are summed over the minibatch, not averaged.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Momentum coefficient in [0, 1).
    pub momentum: f64,
    /// Evaluate the gradient at the momentum look-ahead point.
    pub nesterov: bool,
    pub minibatch: usize,
    /// Coefficient of the (1/2) sum |w| penalty; steps subtract
    /// eta * l1/2 * sgn(w) from weights, with sgn(0) = 0.
    pub l1: f64,
    /// Coefficient of the (1/2) sum w^2 penalty; steps shrink weights by
    /// (1 - eta * l2) after the gradient increment.
    pub l2: f64,
    /// Clamp every weight to [-c, c] after each step.
    pub max_norm: Option<f64>,
    /// Keep probability for dropout on non-final layers.
    pub dropout_keep: Option<f64>,
    pub epochs: usize,
    /// Visit patterns in a fresh random order each epoch.
    pub shuffle: bool,
    /// Stop once validation energy has exceeded its running minimum this
    /// many consecutive epochs. None trains to the epoch limit.
    pub patience: Option<usize>,
    /// Stop once the full-set gradient norm falls below this threshold.
    pub gradient_stop: Option<f64>,
    pub loss: Loss,
    pub init: WeightInit,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            nesterov: false,
            minibatch: 1,
            l1: 0.0,
            l2: 0.0,
            max_norm: None,
            dropout_keep: None,
            epochs: 100,
            shuffle: true,
            patience: Some(5),
            gradient_stop: None,
            loss: Loss::Quadratic,
            init: WeightInit::ScaledGaussian,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NetError> {
        let bad = |msg: &str| Err(NetError::BadConfig(msg.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.minibatch == 0 {
            return bad("minibatch size must be at least 1");
        }
        if !(self.l1 >= 0.0 && self.l1.is_finite() && self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("decay coefficients must be finite and nonnegative");
        }
        if let Some(c) = self.max_norm {
            if !(c > 0.0) {
                return bad("max-norm cap must be positive");
            }
        }
        if let Some(p) = self.dropout_keep {
            if !(p > 0.0 && p <= 1.0) {
                return bad("dropout keep probability must lie in (0, 1]");
            }
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1 epoch");
        }
        if let Some(tol) = self.gradient_stop {
            if !(tol > 0.0) {
                return bad("gradient stopping threshold must be positive");
            }
        }
        Ok(())
    }
}

/// One momentum update: v' = momentum * v - learning_rate * gradient.
///
/// Iterated against a constant gradient from v = 0, the n-th velocity is
/// -learning_rate * gradient * (momentum^(n+1) - 1) / (momentum - 1).
pub fn momentum_step(velocity: f64, gradient: f64, learning_rate: f64, momentum: f64) -> f64 {
    momentum * velocity - learning_rate * gradient
}

/// Draw fresh parameters. Weights become Gaussian with the scheme's spread,
/// thresholds zero; batch-norm scales reset to one, shifts to zero, and
/// running statistics to mean zero, variance one. `Keep` is a no-op.
pub fn initialize_net(net: &mut LayeredNet, init: WeightInit, stream: &mut RandomStream) {
    if init == WeightInit::Keep {
        return;
    }
    let fans: Vec<usize> = (0..net.layers().len())
        .map(|i| net.layers()[i].fan_in(net.layer_input_shape(i)))
        .collect();
    for (layer, fan) in net.layers_mut().iter_mut().zip(fans) {
        let std = match init {
            WeightInit::ScaledGaussian => (1.0 / fan.max(1) as f64).sqrt(),
            WeightInit::FixedStd(s) => s,
            WeightInit::Keep => unreachable!(),
        };
        match &mut layer.kind {
            LayerKind::Dense { weights, thresholds } => {
                for i in 0..weights.rows() {
                    for v in weights.row_mut(i) {
                        *v = stream.gaussian_scaled(0.0, std);
                    }
                }
                thresholds.fill(0.0);
            }
            LayerKind::Convolution { kernel, thresholds, .. } => {
                for v in kernel.iter_mut() {
                    *v = stream.gaussian_scaled(0.0, std);
                }
                thresholds.fill(0.0);
            }
            LayerKind::MaxPool { .. } => {}
            LayerKind::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            } => {
                gamma.fill(1.0);
                beta.fill(0.0);
                running_mean.fill(0.0);
                running_var.fill(1.0);
            }
        }
    }
}

/// Inference-mode energy and classification error of a labeled set.
/// `dropout_keep` must match training so kept units are scaled correctly.
pub fn evaluate(
    net: &LayeredNet,
    data: &LabeledSet,
    loss: Loss,
    dropout_keep: Option<f64>,
) -> Result<(f64, f64), NetError> {
    let pass = net.forward_batch(data.inputs(), Mode::Infer, dropout_keep, None)?;
    let energy = loss_energy(loss, pass.outputs(), data.targets());
    let error = classification_error(pass.outputs(), data.targets(), data.convention());
    Ok((energy, error))
}

/// Per-epoch training metrics, evaluated in inference mode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_energy: f64,
    pub validation_energy: f64,
    pub train_error: f64,
    pub validation_error: f64,
}

/// Epoch-by-epoch record of a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// True when the patience rule ended the run before the epoch limit.
    pub stopped_early: bool,
    /// True when the gradient-norm threshold ended the run.
    pub gradient_converged: bool,
}

impl TrainingLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Render as CSV with the canonical header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,H_train,H_valid,C_train,C_valid\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_energy, r.validation_energy, r.train_error, r.validation_error
            ));
        }
        out
    }
}

/// Train every parameter of the network. See [`train_masked`].
pub fn train(
    net: &mut LayeredNet,
    data: &LabeledSet,
    validation: &LabeledSet,
    cfg: &TrainConfig,
    stream: &mut RandomStream,
) -> Result<TrainingLog, NetError> {
    train_masked(net, data, validation, cfg, None, stream)
}

/// Train with an optional freeze mask over the flattened parameters; frozen
/// entries are never changed by initialization aside (the caller seeds them),
/// gradient steps, decay or clamping.
///
/// Order per minibatch: evaluate gradients (at the look-ahead point when
/// Nesterov momentum is on), update velocities and add them, shrink weights
/// by (1 - eta l2), subtract the signed l1 step, clamp to the max-norm cap.
/// A zero learning rate performs no parameter changes at all.
///
/// Epoch metrics are evaluated in inference mode. Divergence (non-finite
/// energy) aborts with an error naming the epoch. When the network contains
/// batch normalization, trailing minibatches of a single pattern are skipped
/// and running statistics absorb each minibatch's moments with decay 0.9.
pub fn train_masked(
    net: &mut LayeredNet,
    data: &LabeledSet,
    validation: &LabeledSet,
    cfg: &TrainConfig,
    frozen: Option<&[bool]>,
    stream: &mut RandomStream,
) -> Result<TrainingLog, NetError> {
    cfg.validate()?;
    validate_differentiable(net)?;
    cfg.loss.validate_pairing(net)?;
    for set in [data, validation] {
        if set.len() == 0 {
            return Err(NetError::BadConfig("training and validation sets must be nonempty".into()));
        }
        if set.input_dim() != net.input_len() {
            return Err(NetError::InputSize {
                expected: net.input_len(),
                got: set.input_dim(),
            });
        }
        if set.target_dim() != net.output_len() {
            return Err(NetError::TargetSize {
                expected: net.output_len(),
                got: set.target_dim(),
            });
        }
    }
    let count = net.parameter_count();
    let frozen: Vec<bool> = match frozen {
        Some(f) => {
            if f.len() != count {
                return Err(NetError::CountMismatch {
                    context: "freeze mask",
                    expected: count,
                    got: f.len(),
                });
            }
            f.to_vec()
        }
        None => vec![false; count],
    };

    initialize_net(net, cfg.init, stream);
    let kinds = net.param_kinds();
    let has_batchnorm = net
        .layers()
        .iter()
        .any(|l| matches!(l.kind, LayerKind::BatchNorm { .. }));
    let mut velocity = vec![0.0; count];
    let mut log = TrainingLog::default();
    let mut best_valid = f64::INFINITY;
    let mut worse_streak = 0usize;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            stream.shuffle(&mut order);
        }
        if cfg.learning_rate > 0.0 {
            for chunk in order.chunks(cfg.minibatch) {
                if has_batchnorm && chunk.len() < 2 {
                    continue;
                }
                let inputs: Vec<Vec<f64>> =
                    chunk.iter().map(|&i| data.inputs()[i].clone()).collect();
                let targets: Vec<Vec<f64>> =
                    chunk.iter().map(|&i| data.targets()[i].clone()).collect();

                let mut params = net.flatten_params();
                let grads = if cfg.nesterov && cfg.momentum > 0.0 {
                    let mut ahead = params.clone();
                    for (a, v) in ahead.iter_mut().zip(&velocity) {
                        *a += cfg.momentum * v;
                    }
                    net.assign_params(&ahead);
                    let g = minibatch_gradients(net, &inputs, &targets, cfg, stream)?;
                    net.assign_params(&params);
                    g
                } else {
                    minibatch_gradients(net, &inputs, &targets, cfg, stream)?
                };

                for i in 0..count {
                    if frozen[i] {
                        continue;
                    }
                    velocity[i] =
                        momentum_step(velocity[i], grads[i], cfg.learning_rate, cfg.momentum);
                    params[i] += velocity[i];
                }
                if cfg.l2 > 0.0 {
                    let shrink = 1.0 - cfg.learning_rate * cfg.l2;
                    for i in 0..count {
                        if kinds[i] == ParamKind::Weight && !frozen[i] {
                            params[i] *= shrink;
                        }
                    }
                }
                if cfg.l1 > 0.0 {
                    let step = cfg.learning_rate * 0.5 * cfg.l1;
                    for i in 0..count {
                        if kinds[i] == ParamKind::Weight && !frozen[i] {
                            params[i] -= step * signum_zero(params[i]);
                        }
                    }
                }
                if let Some(cap) = cfg.max_norm {
                    for i in 0..count {
                        if kinds[i] == ParamKind::Weight && !frozen[i] {
                            params[i] = params[i].clamp(-cap, cap);
                        }
                    }
                }
                net.assign_params(&params);
            }
        }

        let (train_energy, train_error) = evaluate(net, data, cfg.loss, cfg.dropout_keep)?;
        let (validation_energy, validation_error) =
            evaluate(net, validation, cfg.loss, cfg.dropout_keep)?;
        if !train_energy.is_finite() || !validation_energy.is_finite() {
            return Err(NetError::Diverged { epoch });
        }
        log.records.push(EpochRecord {
            epoch,
            train_energy,
            validation_energy,
            train_error,
            validation_error,
        });

        if let Some(tol) = cfg.gradient_stop {
            let grads = backprop(net, data.inputs(), data.targets(), cfg.loss)?;
            if grads.norm() <= tol {
                log.gradient_converged = true;
                break;
            }
        }
        if let Some(patience) = cfg.patience {
            if validation_energy < best_valid {
                best_valid = validation_energy;
                worse_streak = 0;
            } else if validation_energy > best_valid {
                worse_streak += 1;
                if worse_streak >= patience {
                    log.stopped_early = true;
                    break;
                }
            } else {
                worse_streak = 0;
            }
        }
    }
    Ok(log)
}

fn minibatch_gradients(
    net: &mut LayeredNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
    stream: &mut RandomStream,
) -> Result<Vec<f64>, NetError> {
    let pass = net.forward_batch(inputs, Mode::Train, cfg.dropout_keep, Some(stream))?;
    net.absorb_batch_stats(&pass);
    Ok(backprop_pass(net, &pass, targets, cfg.loss)?.flatten())
}

fn signum_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
