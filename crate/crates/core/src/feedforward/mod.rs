//! Layered feed-forward networks and the supervised-learning toolkit built
//! around them: dense, convolution, max-pool and batch-norm layers, the
//! backward pass for quadratic, log-likelihood and cross-entropy costs,
//! minibatch training with momentum, weight decay, dropout, max-norm caps and
//! early stopping, input standardization, principal components, second-order
//! weight pruning, classification metrics, and exact constructive networks
//! for Boolean tables and parity.
//!
//! Conventions: local fields are b_i = sum_j w_ij x_j - theta_i everywhere,
//! minibatch costs are summed (not averaged) over patterns, and the backward
//! pass returns derivatives of the cost, so a descent step subtracts them.

mod activation;
mod backprop;
mod construct;
mod data;
mod layers;
mod net;
mod preprocess;
mod prune;
mod train;
mod xor;

pub use activation::{softmax, Activation, SoftmaxScale, LEAKY_SLOPE};
pub use backprop::{
    backprop, loss_energy, max_gradient_deviation, Gradients, LayerGradients, Loss,
};
pub use construct::{boolean_net, parity_net, pattern_input, xor_reference};
pub use data::{classification_error, LabeledSet, TargetConvention};
pub use layers::{batchnorm_forward, conv_forward, Layer, LayerKind};
pub use net::{forward, ForwardPass, LayerTrace, ParamKind, Shape};
pub use net::LayeredNet;
pub use preprocess::{pca, preprocess, Pca, Standardizer};
pub use prune::{obs_prune, obs_prune_step, HessianMode, PruneConfig, PruneReport, PruneStep};
pub use train::{
    evaluate, initialize_net, momentum_step, train, train_masked, EpochRecord, TrainConfig,
    TrainingLog, WeightInit,
};
pub use xor::{
    lottery_xor_fraction, lottery_xor_success, xor_net, xor_set, xor_success,
    xor_success_fraction, XorProtocol, XOR_LEARNING_RATE,
};

use thiserror::Error;

/// Errors raised by network construction, evaluation and training.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum NetError {
    #[error("a network needs at least one layer")]
    EmptyNet,

    #[error("layer {layer}: {detail}")]
    BadComposition { layer: usize, detail: String },

    #[error("softmax is only valid on the final dense layer (layer {layer})")]
    SoftmaxPlacement { layer: usize },

    #[error("input length {got} does not match network input {expected}")]
    InputSize { expected: usize, got: usize },

    #[error("target length {got} does not match network output {expected}")]
    TargetSize { expected: usize, got: usize },

    #[error("{context}: expected {expected} items, got {got}")]
    CountMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("loss {loss} requires {requirement}")]
    InvalidPairing {
        loss: &'static str,
        requirement: &'static str,
    },

    #[error("activation {activation} has no derivative, so gradients are undefined")]
    NonDifferentiable { activation: &'static str },

    #[error("dropout in training mode needs a random stream")]
    StreamRequired,

    #[error("batch of {got} is too small: batch normalization needs at least 2 patterns")]
    BatchTooSmall { got: usize },

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("training diverged at epoch {epoch}: energy is not finite")]
    Diverged { epoch: usize },

    #[error("zero-variance input components {components:?} cannot be scaled")]
    ZeroVariance { components: Vec<usize> },

    #[error("bad data file: {0}")]
    BadDataFile(String),

    #[error("bad target encoding: {0}")]
    BadTargets(String),

    #[error("bad construction: {0}")]
    BadConstruction(String),

    #[error("operation applies to {expected} layers only")]
    WrongKind { expected: &'static str },

    #[error("no prunable weight remains (all candidates frozen or skipped)")]
    NothingToPrune,
}

/// Forward-pass semantics. Training mode draws dropout masks and uses batch
/// statistics in batch-norm layers; inference mode scales kept units by the
/// keep probability and uses running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
