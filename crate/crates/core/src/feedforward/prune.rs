//! Weight pruning by expected cost increase, with retraining between cuts.
//!
//! Each candidate weight w_q is scored by L_q = w_q^2 M_qq / 2, the cost of
//! setting it to zero under a quadratic model of the energy around a local
//! minimum with a diagonal curvature estimate. The cheapest weight is zeroed
//! and frozen, the net is retrained to a new minimum, and the cycle repeats
//! until the requested fraction of weights is gone.

use super::backprop::{backprop, Loss};
use super::data::LabeledSet;
use super::net::{LayeredNet, ParamKind};
use super::train::{evaluate, train_masked, TrainConfig, WeightInit};
use super::NetError;
use crate::numerics::RandomStream;

/// Step size for the central difference that probes curvature.
const CURVATURE_STEP: f64 = 1e-4;

/// How the diagonal of the curvature matrix is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HessianMode {
    /// Central finite difference of the gradient component at each weight.
    Diagonal,
    /// M_qq = 1 for every weight, reducing the score to magnitude pruning.
    Identity,
}

/// Settings for a pruning run.
#[derive(Clone, Debug)]
pub struct PruneConfig {
    /// Fraction of the net's weights to remove, rounded down.
    pub fraction: f64,
    pub hessian: HessianMode,
    /// Settings for the retraining pass between cuts; the loss also decides
    /// how candidates are scored. `init` and `patience` are overridden (the
    /// net keeps its parameters, and retraining runs to the epoch cap or the
    /// gradient tolerance).
    pub retrain: TrainConfig,
    /// Stop before a cut whose score exceeds this multiple of the current
    /// energy, on the grounds that the quadratic model no longer predicts a
    /// small increase.
    pub energy_guard: Option<f64>,
}

impl Default for PruneConfig {
    fn default() -> PruneConfig {
        PruneConfig {
            fraction: 0.5,
            hessian: HessianMode::Diagonal,
            retrain: TrainConfig {
                epochs: 200,
                patience: None,
                gradient_stop: Some(1e-4),
                init: WeightInit::Keep,
                ..TrainConfig::default()
            },
            energy_guard: None,
        }
    }
}

/// Record of a single cut.
#[derive(Clone, Debug)]
pub struct PruneStep {
    /// Flat parameter index of the removed weight.
    pub param_index: usize,
    /// Expected cost increase of the cut.
    pub score: f64,
    /// Candidates passed over because their curvature estimate was not
    /// positive, so the quadratic score is meaningless there.
    pub skipped: Vec<usize>,
}

/// Outcome of a full pruning run.
#[derive(Clone, Debug)]
pub struct PruneReport {
    pub steps: Vec<PruneStep>,
    /// Mask over flat parameters; true marks pruned (zeroed) entries.
    pub frozen: Vec<bool>,
    /// True when the energy guard ended the run before the fraction target.
    pub guard_stopped: bool,
}

impl PruneReport {
    pub fn pruned_count(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }
}

/// Score every unfrozen weight; entries with non-positive curvature land in
/// the skipped list instead. The unit-level pruning in [`super::xor`] reads
/// these scores directly, so the helper is visible module-wide.
pub(super) fn weight_scores(
    net: &LayeredNet,
    data: &LabeledSet,
    loss: Loss,
    hessian: HessianMode,
    frozen: &[bool],
) -> Result<(Vec<(usize, f64)>, Vec<usize>), NetError> {
    let kinds = net.param_kinds();
    let params = net.flatten_params();
    let mut probe = net.clone();
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for q in 0..params.len() {
        if frozen[q] || kinds[q] != ParamKind::Weight {
            continue;
        }
        let m = match hessian {
            HessianMode::Identity => 1.0,
            HessianMode::Diagonal => {
                let mut shifted = params.clone();
                shifted[q] = params[q] + CURVATURE_STEP;
                probe.assign_params(&shifted);
                let plus = backprop(&probe, data.inputs(), data.targets(), loss)?.flatten()[q];
                shifted[q] = params[q] - CURVATURE_STEP;
                probe.assign_params(&shifted);
                let minus = backprop(&probe, data.inputs(), data.targets(), loss)?.flatten()[q];
                (plus - minus) / (2.0 * CURVATURE_STEP)
            }
        };
        if m <= 0.0 {
            skipped.push(q);
        } else {
            scored.push((q, 0.5 * params[q] * params[q] * m));
        }
    }
    Ok((scored, skipped))
}

fn cheapest(scored: &[(usize, f64)]) -> (usize, f64) {
    let mut best = scored[0];
    for &(q, score) in &scored[1..] {
        if score < best.1 {
            best = (q, score);
        }
    }
    best
}

/// Remove the single cheapest unfrozen weight, zeroing it in the net and
/// marking it in `frozen`. Fails with `NothingToPrune` when no weight has a
/// usable score.
pub fn obs_prune_step(
    net: &mut LayeredNet,
    data: &LabeledSet,
    loss: Loss,
    hessian: HessianMode,
    frozen: &mut [bool],
) -> Result<PruneStep, NetError> {
    if frozen.len() != net.parameter_count() {
        return Err(NetError::CountMismatch {
            context: "frozen mask",
            expected: net.parameter_count(),
            got: frozen.len(),
        });
    }
    let (scored, skipped) = weight_scores(net, data, loss, hessian, frozen)?;
    if scored.is_empty() {
        return Err(NetError::NothingToPrune);
    }
    let (param_index, score) = cheapest(&scored);
    let mut params = net.flatten_params();
    params[param_index] = 0.0;
    net.assign_params(&params);
    frozen[param_index] = true;
    Ok(PruneStep {
        param_index,
        score,
        skipped,
    })
}

/// Alternate retraining and single cuts until the fraction target is met,
/// the guard trips, or no prunable weight remains.
pub fn obs_prune(
    net: &mut LayeredNet,
    data: &LabeledSet,
    cfg: &PruneConfig,
    stream: &mut RandomStream,
) -> Result<PruneReport, NetError> {
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(NetError::BadConfig(format!(
            "prune fraction must lie in (0, 1], got {}",
            cfg.fraction
        )));
    }
    if let Some(guard) = cfg.energy_guard {
        if !(guard > 0.0) {
            return Err(NetError::BadConfig(format!(
                "energy guard must be positive, got {guard}"
            )));
        }
    }
    let retrain_cfg = TrainConfig {
        init: WeightInit::Keep,
        patience: None,
        ..cfg.retrain.clone()
    };
    let loss = retrain_cfg.loss;
    let weight_count = net
        .param_kinds()
        .iter()
        .filter(|&&k| k == ParamKind::Weight)
        .count();
    let target = (cfg.fraction * weight_count as f64).floor() as usize;

    let mut frozen = vec![false; net.parameter_count()];
    let mut steps = Vec::new();
    let mut guard_stopped = false;
    loop {
        train_masked(net, data, data, &retrain_cfg, Some(&frozen), stream)?;
        if steps.len() >= target {
            break;
        }
        let (scored, skipped) = weight_scores(net, data, loss, cfg.hessian, &frozen)?;
        if scored.is_empty() {
            break;
        }
        let (param_index, score) = cheapest(&scored);
        if let Some(guard) = cfg.energy_guard {
            let (energy, _) = evaluate(net, data, loss, None)?;
            if score > guard * energy {
                guard_stopped = true;
                break;
            }
        }
        let mut params = net.flatten_params();
        params[param_index] = 0.0;
        net.assign_params(&params);
        frozen[param_index] = true;
        steps.push(PruneStep {
            param_index,
            score,
            skipped,
        });
    }
    Ok(PruneReport {
        steps,
        frozen,
        guard_stopped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedforward::{
        initialize_net, Activation, Layer, LayeredNet, TargetConvention,
    };
    use crate::numerics::Matrix;

    fn linear_net(weights: &[f64]) -> LayeredNet {
        let w = Matrix::from_fn(1, weights.len(), |_, j| weights[j]);
        let layer = Layer::dense_from(w, vec![0.0], Activation::Identity).unwrap();
        LayeredNet::flat(weights.len(), vec![layer]).unwrap()
    }

    fn any_data(n: usize) -> LabeledSet {
        LabeledSet::new(
            vec![vec![1.0; n]],
            vec![vec![0.0]],
            TargetConvention::ZeroOne,
        )
        .unwrap()
    }

    #[test]
    fn identity_mode_prunes_by_magnitude() {
        let mut net = linear_net(&[3.0, -0.2, 1.0]);
        let data = any_data(3);
        let mut frozen = vec![false; net.parameter_count()];
        let step = obs_prune_step(
            &mut net,
            &data,
            Loss::Quadratic,
            HessianMode::Identity,
            &mut frozen,
        )
        .unwrap();
        assert_eq!(step.param_index, 1);
        assert!((step.score - 0.5 * 0.2 * 0.2).abs() < 1e-15);
        assert_eq!(net.flatten_params()[1], 0.0);
        assert!(frozen[1]);

        let step = obs_prune_step(
            &mut net,
            &data,
            Loss::Quadratic,
            HessianMode::Identity,
            &mut frozen,
        )
        .unwrap();
        assert_eq!(step.param_index, 2);
    }

    #[test]
    fn zero_weight_scores_zero_and_goes_first() {
        let mut net = linear_net(&[0.5, 0.0]);
        let data = any_data(2);
        let mut frozen = vec![false; net.parameter_count()];
        let step = obs_prune_step(
            &mut net,
            &data,
            Loss::Quadratic,
            HessianMode::Diagonal,
            &mut frozen,
        )
        .unwrap();
        assert_eq!(step.param_index, 1);
        assert_eq!(step.score, 0.0);
    }

    #[test]
    fn probed_curvature_matches_the_analytic_second_derivative() {
        // One linear unit, H = sum of (t - (w x - theta))^2 / 2, so the exact
        // curvature at w is the sum of x^2 over the batch.
        let w = Matrix::from_fn(1, 1, |_, _| 0.7);
        let layer = Layer::dense_from(w, vec![0.3], Activation::Identity).unwrap();
        let mut net = LayeredNet::flat(1, vec![layer]).unwrap();
        let data = LabeledSet::new(
            vec![vec![1.0], vec![2.0]],
            vec![vec![0.0], vec![0.0]],
            TargetConvention::ZeroOne,
        )
        .unwrap();
        let mut frozen = vec![false; net.parameter_count()];
        let step = obs_prune_step(
            &mut net,
            &data,
            Loss::Quadratic,
            HessianMode::Diagonal,
            &mut frozen,
        )
        .unwrap();
        assert_eq!(step.param_index, 0);
        let expected = 0.5 * 0.7 * 0.7 * 5.0;
        assert!(
            (step.score - expected).abs() < 1e-6,
            "score {} vs {expected}",
            step.score
        );
    }

    #[test]
    fn weights_behind_a_dead_relu_are_skipped() {
        // Hidden unit 0 never activates on this data, so its in-weights and
        // its outgoing weight see zero curvature and must be passed over.
        let hidden = Layer::dense_from(
            Matrix::from_rows(&[vec![-1.0, -1.0], vec![0.5, 0.5]]),
            vec![0.0, 0.0],
            Activation::Relu,
        )
        .unwrap();
        let readout = Layer::dense_from(
            Matrix::from_rows(&[vec![1.0, 1.0]]),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap();
        let mut net = LayeredNet::flat(2, vec![hidden, readout]).unwrap();
        let data = LabeledSet::new(
            vec![vec![1.0, 1.0], vec![0.5, 1.0]],
            vec![vec![0.0], vec![0.0]],
            TargetConvention::ZeroOne,
        )
        .unwrap();
        let mut frozen = vec![false; net.parameter_count()];
        let step = obs_prune_step(
            &mut net,
            &data,
            Loss::Quadratic,
            HessianMode::Diagonal,
            &mut frozen,
        )
        .unwrap();
        for dead in [0, 1, 6] {
            assert!(step.skipped.contains(&dead), "index {dead} not skipped");
        }
        assert!([2usize, 3, 7].contains(&step.param_index));
    }

    #[test]
    fn energy_guard_stops_a_perfectly_fitted_net() {
        let w = Matrix::from_fn(1, 1, |_, _| 1.0);
        let layer = Layer::dense_from(w, vec![0.0], Activation::Identity).unwrap();
        let mut net = LayeredNet::flat(1, vec![layer]).unwrap();
        let data = LabeledSet::new(
            vec![vec![1.0]],
            vec![vec![1.0]],
            TargetConvention::ZeroOne,
        )
        .unwrap();
        let cfg = PruneConfig {
            fraction: 1.0,
            energy_guard: Some(1.0),
            ..PruneConfig::default()
        };
        let mut stream = crate::numerics::RandomStream::new(7);
        let report = obs_prune(&mut net, &data, &cfg, &mut stream).unwrap();
        assert!(report.guard_stopped);
        assert!(report.steps.is_empty());
        assert_eq!(report.pruned_count(), 0);
        // The fitted weight survived.
        assert_eq!(net.flatten_params()[0], 1.0);
    }

    #[test]
    fn full_run_reaches_the_requested_fraction_and_pruned_weights_stay_zero() {
        let layers = vec![
            Layer::dense(2, 3, Activation::Tanh),
            Layer::dense(3, 1, Activation::Sigmoid),
        ];
        let mut net = LayeredNet::flat(2, layers).unwrap();
        let mut stream = crate::numerics::RandomStream::new(99);
        initialize_net(&mut net, WeightInit::FixedStd(0.5), &mut stream);
        let data = LabeledSet::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![0.0], vec![1.0], vec![0.0]],
            TargetConvention::ZeroOne,
        )
        .unwrap();
        let cfg = PruneConfig {
            fraction: 0.5,
            hessian: HessianMode::Identity,
            retrain: TrainConfig {
                epochs: 5,
                patience: None,
                gradient_stop: Some(1e-4),
                init: WeightInit::Keep,
                ..TrainConfig::default()
            },
            energy_guard: None,
        };
        let report = obs_prune(&mut net, &data, &cfg, &mut stream).unwrap();
        // 9 weights in total, so half rounds down to 4.
        assert_eq!(report.steps.len(), 4);
        assert_eq!(report.pruned_count(), 4);
        let params = net.flatten_params();
        let kinds = net.param_kinds();
        for (q, &gone) in report.frozen.iter().enumerate() {
            if gone {
                assert_eq!(params[q], 0.0, "pruned weight {q} moved after retraining");
                assert_eq!(kinds[q], ParamKind::Weight);
            }
        }
    }
}
