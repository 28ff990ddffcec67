//! Recurrent networks trained two ways: relaxation to a fixed point with a
//! dual relaxation for the errors, and unfolding in time for sequence tasks,
//! including the truncated variant.
//!
//! One network type serves both modes. Fixed-point training reads targets
//! directly off the trailing units of the recurrent core (the readout matrix
//! plays no part there), while sequence training drives separate output
//! units through the readout weights at every time step.

use crate::feedforward::Activation;
use crate::numerics::{Matrix, RandomStream};
use thiserror::Error;

/// Default Euler-step count limit for relaxations.
pub const DEFAULT_RELAX_STEPS: usize = 100_000;

/// Default relaxation tolerance on the per-step state change.
pub const DEFAULT_RELAX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RecurrentError {
    #[error("bad network shapes: {0}")]
    BadShapes(String),

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("activation {0} cannot drive a recurrent net")]
    BadActivation(&'static str),

    #[error("relaxation did not converge within {steps} steps (residual {residual:.3e})")]
    Diverged { steps: usize, residual: f64 },

    #[error("sequence task: {0}")]
    BadSequence(String),
}

/// Recurrent network with a fully connected core.
///
/// The core holds `units` neurons V with feedback weights w^(vv), input
/// weights w^(vx), and thresholds theta^(v). Readout units O observe the
/// core through w^(ov) with thresholds theta^(o) and may use a different
/// activation. The time constant tau scales the continuous relaxation
/// dynamics tau dV/dt = -V + g(b).
#[derive(Clone, Debug)]
pub struct RecurrentNet {
    w_vv: Matrix,
    w_vx: Matrix,
    w_ov: Matrix,
    theta_v: Vec<f64>,
    theta_o: Vec<f64>,
    tau: f64,
    hidden_activation: Activation,
    output_activation: Activation,
}

fn check_activation(g: Activation) -> Result<(), RecurrentError> {
    if !g.differentiable() || g == Activation::Softmax {
        return Err(RecurrentError::BadActivation(g.name()));
    }
    Ok(())
}

impl RecurrentNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        w_vv: Matrix,
        w_vx: Matrix,
        w_ov: Matrix,
        theta_v: Vec<f64>,
        theta_o: Vec<f64>,
        tau: f64,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<RecurrentNet, RecurrentError> {
        let units = w_vv.rows();
        if units == 0 || w_vv.cols() != units {
            return Err(RecurrentError::BadShapes(format!(
                "feedback matrix must be square and nonempty, got {}x{}",
                w_vv.rows(),
                w_vv.cols()
            )));
        }
        if w_vx.rows() != units {
            return Err(RecurrentError::BadShapes(format!(
                "input matrix feeds {} units, core has {units}",
                w_vx.rows()
            )));
        }
        if w_ov.cols() != units {
            return Err(RecurrentError::BadShapes(format!(
                "readout matrix observes {} units, core has {units}",
                w_ov.cols()
            )));
        }
        if theta_v.len() != units {
            return Err(RecurrentError::BadShapes(format!(
                "{} core thresholds for {units} units",
                theta_v.len()
            )));
        }
        if theta_o.len() != w_ov.rows() {
            return Err(RecurrentError::BadShapes(format!(
                "{} readout thresholds for {} readout units",
                theta_o.len(),
                w_ov.rows()
            )));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(RecurrentError::BadConfig(format!(
                "time constant must be positive, got {tau}"
            )));
        }
        check_activation(hidden_activation)?;
        check_activation(output_activation)?;
        Ok(RecurrentNet {
            w_vv,
            w_vx,
            w_ov,
            theta_v,
            theta_o,
            tau,
            hidden_activation,
            output_activation,
        })
    }

    /// Gaussian weights with the given standard deviation, zero thresholds.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        units: usize,
        inputs: usize,
        outputs: usize,
        std_dev: f64,
        tau: f64,
        hidden_activation: Activation,
        output_activation: Activation,
        stream: &mut RandomStream,
    ) -> Result<RecurrentNet, RecurrentError> {
        let mut draw = |rows: usize, cols: usize| {
            Matrix::from_fn(rows, cols, |_, _| stream.gaussian_scaled(0.0, std_dev))
        };
        let w_vv = draw(units, units);
        let w_vx = draw(units, inputs);
        let w_ov = draw(outputs, units);
        RecurrentNet::new(
            w_vv,
            w_vx,
            w_ov,
            vec![0.0; units],
            vec![0.0; outputs],
            tau,
            hidden_activation,
            output_activation,
        )
    }

    pub fn units(&self) -> usize {
        self.w_vv.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w_vx.cols()
    }

    pub fn outputs(&self) -> usize {
        self.w_ov.rows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn w_vv(&self) -> &Matrix {
        &self.w_vv
    }

    pub fn w_vx(&self) -> &Matrix {
        &self.w_vx
    }

    pub fn w_ov(&self) -> &Matrix {
        &self.w_ov
    }

    pub fn parameter_count(&self) -> usize {
        let n = self.units();
        n * n + n * self.inputs() + self.outputs() * n + n + self.outputs()
    }

    /// Parameters in one flat vector: feedback weights row by row, then
    /// input weights, readout weights, core thresholds, readout thresholds.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.parameter_count());
        for matrix in [&self.w_vv, &self.w_vx, &self.w_ov] {
            for i in 0..matrix.rows() {
                params.extend_from_slice(matrix.row(i));
            }
        }
        params.extend_from_slice(&self.theta_v);
        params.extend_from_slice(&self.theta_o);
        params
    }

    /// Inverse of [`RecurrentNet::flatten_params`].
    ///
    /// Panics when the length does not match the parameter count.
    pub fn assign_params(&mut self, params: &[f64]) {
        assert_eq!(
            params.len(),
            self.parameter_count(),
            "parameter vector length"
        );
        let mut at = 0;
        for matrix in [&mut self.w_vv, &mut self.w_vx, &mut self.w_ov] {
            for i in 0..matrix.rows() {
                let row = matrix.row_mut(i);
                row.copy_from_slice(&params[at..at + row.len()]);
                at += row.len();
            }
        }
        let n_v = self.theta_v.len();
        let n_o = self.theta_o.len();
        self.theta_v.copy_from_slice(&params[at..at + n_v]);
        at += n_v;
        self.theta_o.copy_from_slice(&params[at..at + n_o]);
    }

    /// Local fields of the core units at state `v` under input `x`.
    fn core_fields(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        let feedback = self.w_vv.mul_vec(v);
        let driven = self.w_vx.mul_vec(x);
        (0..self.units())
            .map(|i| feedback[i] + driven[i] - self.theta_v[i])
            .collect()
    }
}

/// Euler integration settings for the relaxation dynamics.
#[derive(Clone, Copy, Debug)]
pub struct RelaxSettings {
    pub dt: f64,
    pub max_steps: usize,
    pub tol: f64,
}

impl RelaxSettings {
    /// Step a tenth of the time constant, default step budget and tolerance.
    pub fn for_tau(tau: f64) -> RelaxSettings {
        RelaxSettings {
            dt: tau / 10.0,
            max_steps: DEFAULT_RELAX_STEPS,
            tol: DEFAULT_RELAX_TOL,
        }
    }

    pub fn with_tol(self, tol: f64) -> RelaxSettings {
        RelaxSettings { tol, ..self }
    }
}

/// Converged steady state of the core dynamics.
#[derive(Clone, Debug)]
pub struct Relaxation {
    /// Fixed-point states V*.
    pub states: Vec<f64>,
    /// Local fields b* at the fixed point.
    pub fields: Vec<f64>,
    /// Euler steps taken.
    pub steps: usize,
}

fn check_relax_args(tau: f64, dt: f64, tol: f64) -> Result<(), RecurrentError> {
    if !(dt > 0.0 && dt < tau) {
        return Err(RecurrentError::BadConfig(format!(
            "Euler step must satisfy 0 < dt < tau, got dt = {dt} at tau = {tau}"
        )));
    }
    if !(tol > 0.0) {
        return Err(RecurrentError::BadConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

/// Residual bound that makes the per-step change criterion also certify the
/// fixed-point equation to ten tolerances.
fn residual_limit(tau: f64, dt: f64, tol: f64) -> f64 {
    (10.0 * tol).min(tol * tau / dt)
}

/// Relax tau dV/dt = -V + g(b) from V = 0 by forward Euler until the state
/// stops moving. The returned fixed point satisfies |g(b*) - V*| < 10 tol
/// componentwise.
pub fn relax_states(
    net: &RecurrentNet,
    input: &[f64],
    dt: f64,
    max_steps: usize,
    tol: f64,
) -> Result<Relaxation, RecurrentError> {
    if input.len() != net.inputs() {
        return Err(RecurrentError::BadShapes(format!(
            "input of length {} for {} input terminals",
            input.len(),
            net.inputs()
        )));
    }
    check_relax_args(net.tau, dt, tol)?;
    let limit = residual_limit(net.tau, dt, tol);
    let g = net.hidden_activation;
    let mut states = vec![0.0; net.units()];
    let mut residual_inf = f64::INFINITY;
    for step in 0..=max_steps {
        let fields = net.core_fields(&states, input);
        let residuals: Vec<f64> = fields
            .iter()
            .zip(&states)
            .map(|(&b, &v)| g.value(b) - v)
            .collect();
        residual_inf = residuals.iter().fold(0.0, |acc, r| acc.max(r.abs()));
        if !residual_inf.is_finite() {
            return Err(RecurrentError::Diverged {
                steps: step,
                residual: residual_inf,
            });
        }
        if residual_inf < limit {
            return Ok(Relaxation {
                states,
                fields,
                steps: step,
            });
        }
        for (v, r) in states.iter_mut().zip(&residuals) {
            *v += dt / net.tau * r;
        }
    }
    Err(RecurrentError::Diverged {
        steps: max_steps,
        residual: residual_inf,
    })
}

/// Relax the dual error dynamics
/// tau dD_j/dt = -D_j + sum_i D_i w_ij g'(b_j*) + g'(b_j*) E_j*
/// to its fixed point, starting from D = 0. `errors` spans all core units
/// (zero on units without a target). The result solves the transposed
/// linear system of the steady-state gradient.
pub fn relax_errors(
    net: &RecurrentNet,
    relaxation: &Relaxation,
    errors: &[f64],
    dt: f64,
    max_steps: usize,
    tol: f64,
) -> Result<Vec<f64>, RecurrentError> {
    let n = net.units();
    if errors.len() != n || relaxation.states.len() != n {
        return Err(RecurrentError::BadShapes(format!(
            "error vector of length {} for {n} units",
            errors.len()
        )));
    }
    check_relax_args(net.tau, dt, tol)?;
    let limit = residual_limit(net.tau, dt, tol);
    let slopes: Vec<f64> = relaxation
        .fields
        .iter()
        .map(|&b| net.hidden_activation.derivative(b))
        .collect();
    let w_t = net.w_vv.transposed();
    let mut deltas = vec![0.0; n];
    let mut residual_inf = f64::INFINITY;
    for step in 0..=max_steps {
        let propagated = w_t.mul_vec(&deltas);
        let residuals: Vec<f64> = (0..n)
            .map(|j| slopes[j] * (propagated[j] + errors[j]) - deltas[j])
            .collect();
        residual_inf = residuals.iter().fold(0.0, |acc, r| acc.max(r.abs()));
        if !residual_inf.is_finite() {
            return Err(RecurrentError::Diverged {
                steps: step,
                residual: residual_inf,
            });
        }
        if residual_inf < limit {
            return Ok(deltas);
        }
        for (d, r) in deltas.iter_mut().zip(&residuals) {
            *d += dt / net.tau * r;
        }
    }
    Err(RecurrentError::Diverged {
        steps: max_steps,
        residual: residual_inf,
    })
}

/// Error vector over all core units: y_k - V_k* on the trailing
/// `targets.len()` units, zero elsewhere.
fn steady_errors(
    net: &RecurrentNet,
    states: &[f64],
    targets: &[f64],
) -> Result<Vec<f64>, RecurrentError> {
    let n = net.units();
    if targets.is_empty() || targets.len() > n {
        return Err(RecurrentError::BadShapes(format!(
            "{} targets for a core of {n} units",
            targets.len()
        )));
    }
    let mut errors = vec![0.0; n];
    let offset = n - targets.len();
    for (k, &y) in targets.iter().enumerate() {
        errors[offset + k] = y - states[offset + k];
    }
    Ok(errors)
}

/// Steady-state energy H* = 1/2 sum_k (y_k - V_k*)^2 with the trailing core
/// units read as outputs. Used as the scalar objective of fixed-point
/// training and by finite-difference audits.
pub fn steady_energy(
    net: &RecurrentNet,
    input: &[f64],
    targets: &[f64],
    settings: RelaxSettings,
) -> Result<f64, RecurrentError> {
    let relaxation = relax_states(net, input, settings.dt, settings.max_steps, settings.tol)?;
    let errors = steady_errors(net, &relaxation.states, targets)?;
    Ok(0.5 * errors.iter().map(|e| e * e).sum::<f64>())
}

/// Steady-state gradients of one pattern, with the relaxations that
/// produced them.
#[derive(Clone, Debug)]
pub struct RbpGradients {
    /// dH*/dw^(vv).
    pub w_vv: Matrix,
    /// dH*/dw^(vx).
    pub w_vx: Matrix,
    /// Converged state relaxation.
    pub relaxation: Relaxation,
    /// Converged error relaxation D*.
    pub deltas: Vec<f64>,
    /// H* before any update.
    pub energy: f64,
}

/// Gradients of the steady-state energy for one (input, targets) pattern.
/// Targets attach to the trailing core units. The gradient-descent
/// increment is -eta times each entry.
pub fn rbp_gradients(
    net: &RecurrentNet,
    input: &[f64],
    targets: &[f64],
    settings: RelaxSettings,
) -> Result<RbpGradients, RecurrentError> {
    let relaxation = relax_states(net, input, settings.dt, settings.max_steps, settings.tol)?;
    let errors = steady_errors(net, &relaxation.states, targets)?;
    let deltas = relax_errors(
        net,
        &relaxation,
        &errors,
        settings.dt,
        settings.max_steps,
        settings.tol,
    )?;
    let energy = 0.5 * errors.iter().map(|e| e * e).sum::<f64>();
    let n = net.units();
    let w_vv = Matrix::from_fn(n, n, |m, j| -deltas[m] * relaxation.states[j]);
    let w_vx = Matrix::from_fn(n, net.inputs(), |m, k| -deltas[m] * input[k]);
    Ok(RbpGradients {
        w_vv,
        w_vx,
        relaxation,
        deltas,
        energy,
    })
}

/// One fixed-point training step: relax the states, relax the errors, and
/// move the feedback and input weights along -eta times their steady-state
/// gradients. Thresholds stay put. A diverging relaxation leaves the net
/// untouched and propagates as an error.
pub fn recurrent_bp_step(
    net: &mut RecurrentNet,
    input: &[f64],
    targets: &[f64],
    eta: f64,
    settings: RelaxSettings,
) -> Result<RbpGradients, RecurrentError> {
    if !eta.is_finite() {
        return Err(RecurrentError::BadConfig(format!(
            "learning rate must be finite, got {eta}"
        )));
    }
    let gradients = rbp_gradients(net, input, targets, settings)?;
    let n = net.units();
    for m in 0..n {
        for j in 0..n {
            net.w_vv[(m, j)] -= eta * gradients.w_vv[(m, j)];
        }
        for k in 0..net.w_vx.cols() {
            net.w_vx[(m, k)] -= eta * gradients.w_vx[(m, k)];
        }
    }
    Ok(gradients)
}

/// Maximum normalized deviation between the analytic steady-state gradients
/// and central finite differences of H* recomputed through re-relaxation,
/// over the feedback and input weight blocks.
pub fn rbp_gradient_deviation(
    net: &RecurrentNet,
    input: &[f64],
    targets: &[f64],
    settings: RelaxSettings,
    h: f64,
) -> Result<f64, RecurrentError> {
    let gradients = rbp_gradients(net, input, targets, settings)?;
    let n = net.units();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut check = |matrix_pick: usize, m: usize, j: usize, analytic: f64| {
        let read = |net: &RecurrentNet| match matrix_pick {
            0 => net.w_vv[(m, j)],
            _ => net.w_vx[(m, j)],
        };
        let base = read(net);
        let mut energy_at = |value: f64| {
            match matrix_pick {
                0 => probe.w_vv[(m, j)] = value,
                _ => probe.w_vx[(m, j)] = value,
            }
            steady_energy(&probe, input, targets, settings)
        };
        let plus = energy_at(base + h)?;
        let minus = energy_at(base - h)?;
        energy_at(base)?;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs()));
        Ok::<(), RecurrentError>(())
    };
    for m in 0..n {
        for j in 0..n {
            check(0, m, j, gradients.w_vv[(m, j)])?;
        }
        for k in 0..net.w_vx.cols() {
            check(1, m, k, gradients.w_vx[(m, k)])?;
        }
    }
    Ok(worst)
}

/// A time sequence of inputs with a target for every step.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTask {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl SequenceTask {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
    ) -> Result<SequenceTask, RecurrentError> {
        if inputs.is_empty() {
            return Err(RecurrentError::BadSequence(
                "a sequence needs at least one step".into(),
            ));
        }
        if inputs.len() != targets.len() {
            return Err(RecurrentError::BadSequence(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let n_in = inputs[0].len();
        let n_out = targets[0].len();
        if n_in == 0 || n_out == 0 {
            return Err(RecurrentError::BadSequence(
                "steps must carry at least one input and one target".into(),
            ));
        }
        for (t, (x, y)) in inputs.iter().zip(&targets).enumerate() {
            if x.len() != n_in || y.len() != n_out {
                return Err(RecurrentError::BadSequence(format!(
                    "step {t} has {} inputs and {} targets, expected {n_in} and {n_out}",
                    x.len(),
                    y.len()
                )));
            }
        }
        Ok(SequenceTask { inputs, targets })
    }

    /// Number of time steps T.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// Parse the text form: a header line "T N_in N_out", then T lines of
    /// N_in inputs followed by N_out targets. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<SequenceTask, RecurrentError> {
        let bad = |detail: String| RecurrentError::BadSequence(detail);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| bad(format!("bad header entry {tok:?}")))
            })
            .collect::<Result<_, _>>()?;
        let [steps, n_in, n_out] = dims[..] else {
            return Err(bad(format!(
                "header needs T N_in N_out, got {} fields",
                dims.len()
            )));
        };
        let mut inputs = Vec::with_capacity(steps);
        let mut targets = Vec::with_capacity(steps);
        for t in 0..steps {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("expected {steps} steps, file ends after {t}")))?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| bad(format!("step {t}: bad number {tok:?}")))
                })
                .collect::<Result<_, _>>()?;
            if values.len() != n_in + n_out {
                return Err(bad(format!(
                    "step {t} has {} values, expected {}",
                    values.len(),
                    n_in + n_out
                )));
            }
            inputs.push(values[..n_in].to_vec());
            targets.push(values[n_in..].to_vec());
        }
        if lines.next().is_some() {
            return Err(bad(format!("more than {steps} data lines")));
        }
        SequenceTask::new(inputs, targets)
    }

    /// Inverse of [`SequenceTask::parse`].
    pub fn render(&self) -> String {
        let mut out = format!("{} {} {}\n", self.len(), self.input_dim(), self.target_dim());
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let line: Vec<String> = x.iter().chain(y).map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Unfolded forward pass of the discrete-time dynamics
/// V_t = g(w^(vv) V_{t-1} + w^(vx) x_t - theta^(v)),
/// O_t = g_out(w^(ov) V_t - theta^(o)), from V_0 = 0.
#[derive(Clone, Debug)]
pub struct BpttPass {
    /// V_0 .. V_T (length T + 1).
    pub states: Vec<Vec<f64>>,
    /// Core fields b_1 .. b_T.
    pub fields: Vec<Vec<f64>>,
    /// Readout fields B_1 .. B_T.
    pub output_fields: Vec<Vec<f64>>,
    /// Readout values O_1 .. O_T.
    pub outputs: Vec<Vec<f64>>,
    /// Errors E_t = y_t - O_t.
    pub errors: Vec<Vec<f64>>,
    /// Sequence energy 1/2 sum_t |E_t|^2.
    pub energy: f64,
}

fn check_task(net: &RecurrentNet, task: &SequenceTask) -> Result<(), RecurrentError> {
    if task.input_dim() != net.inputs() {
        return Err(RecurrentError::BadShapes(format!(
            "task inputs of dimension {} for {} input terminals",
            task.input_dim(),
            net.inputs()
        )));
    }
    if task.target_dim() != net.outputs() {
        return Err(RecurrentError::BadShapes(format!(
            "task targets of dimension {} for {} readout units",
            task.target_dim(),
            net.outputs()
        )));
    }
    Ok(())
}

/// Run the unfolded dynamics over the whole sequence.
pub fn bptt_pass(net: &RecurrentNet, task: &SequenceTask) -> Result<BpttPass, RecurrentError> {
    check_task(net, task)?;
    let steps = task.len();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(vec![0.0; net.units()]);
    let mut fields = Vec::with_capacity(steps);
    let mut output_fields = Vec::with_capacity(steps);
    let mut outputs = Vec::with_capacity(steps);
    let mut errors = Vec::with_capacity(steps);
    let mut energy = 0.0;
    for t in 0..steps {
        let b = net.core_fields(&states[t], &task.inputs()[t]);
        let v: Vec<f64> = b.iter().map(|&bi| net.hidden_activation.value(bi)).collect();
        let driven = net.w_ov.mul_vec(&v);
        let capital_b: Vec<f64> = driven
            .iter()
            .zip(&net.theta_o)
            .map(|(&d, &th)| d - th)
            .collect();
        let o: Vec<f64> = capital_b
            .iter()
            .map(|&bi| net.output_activation.value(bi))
            .collect();
        let e: Vec<f64> = task.targets()[t]
            .iter()
            .zip(&o)
            .map(|(&y, &oi)| y - oi)
            .collect();
        energy += 0.5 * e.iter().map(|ei| ei * ei).sum::<f64>();
        states.push(v);
        fields.push(b);
        output_fields.push(capital_b);
        outputs.push(o);
        errors.push(e);
    }
    Ok(BpttPass {
        states,
        fields,
        output_fields,
        outputs,
        errors,
        energy,
    })
}

/// Sequence energy 1/2 sum_t |y_t - O_t|^2 of the unfolded dynamics.
pub fn sequence_energy(net: &RecurrentNet, task: &SequenceTask) -> Result<f64, RecurrentError> {
    Ok(bptt_pass(net, task)?.energy)
}

/// Gradients of the sequence energy for every parameter block. The
/// gradient-descent increment is -eta times each entry.
#[derive(Clone, Debug)]
pub struct BpttGradients {
    pub w_vv: Matrix,
    pub w_vx: Matrix,
    pub w_ov: Matrix,
    pub theta_v: Vec<f64>,
    pub theta_o: Vec<f64>,
    /// Sequence energy of the forward pass the gradients came from.
    pub energy: f64,
}

impl BpttGradients {
    /// Same flat order as [`RecurrentNet::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for matrix in [&self.w_vv, &self.w_vx, &self.w_ov] {
            for i in 0..matrix.rows() {
                flat.extend_from_slice(matrix.row(i));
            }
        }
        flat.extend_from_slice(&self.theta_v);
        flat.extend_from_slice(&self.theta_o);
        flat
    }
}

/// Readout errors Delta_t = E_t * g_out'(B_t), one vector per step.
fn readout_deltas(net: &RecurrentNet, pass: &BpttPass) -> Vec<Vec<f64>> {
    pass.errors
        .iter()
        .zip(&pass.output_fields)
        .map(|(e, b)| {
            e.iter()
                .zip(b)
                .map(|(&ei, &bi)| ei * net.output_activation.derivative(bi))
                .collect()
        })
        .collect()
}

/// Core slopes g'(b_t), one vector per step.
fn core_slopes(net: &RecurrentNet, pass: &BpttPass) -> Vec<Vec<f64>> {
    pass.fields
        .iter()
        .map(|b| {
            b.iter()
                .map(|&bi| net.hidden_activation.derivative(bi))
                .collect()
        })
        .collect()
}

/// Assemble gradients from per-step core errors delta_t and readout errors.
fn gradients_from_deltas(
    net: &RecurrentNet,
    task: &SequenceTask,
    pass: &BpttPass,
    deltas: &[Vec<f64>],
    capital_deltas: &[Vec<f64>],
) -> BpttGradients {
    let n = net.units();
    let steps = task.len();
    let mut w_vv = Matrix::zeros(n, n);
    let mut w_vx = Matrix::zeros(n, net.inputs());
    let mut w_ov = Matrix::zeros(net.outputs(), n);
    let mut theta_v = vec![0.0; n];
    let mut theta_o = vec![0.0; net.outputs()];
    for t in 0..steps {
        for m in 0..n {
            let d = deltas[t][m];
            for j in 0..n {
                w_vv[(m, j)] -= d * pass.states[t][j];
            }
            for k in 0..net.inputs() {
                w_vx[(m, k)] -= d * task.inputs()[t][k];
            }
            theta_v[m] += d;
        }
        for m in 0..net.outputs() {
            let d = capital_deltas[t][m];
            for j in 0..n {
                w_ov[(m, j)] -= d * pass.states[t + 1][j];
            }
            theta_o[m] += d;
        }
    }
    BpttGradients {
        w_vv,
        w_vx,
        w_ov,
        theta_v,
        theta_o,
        energy: pass.energy,
    }
}

/// Full backpropagation through time: the core errors follow the backward
/// recursion
/// delta_T = (w^(ov)T Delta_T) * g'(b_T),
/// delta_t = (w^(ov)T Delta_t + w^(vv)T delta_{t+1}) * g'(b_t).
pub fn bptt_gradients(
    net: &RecurrentNet,
    task: &SequenceTask,
) -> Result<BpttGradients, RecurrentError> {
    let pass = bptt_pass(net, task)?;
    let capital_deltas = readout_deltas(net, &pass);
    let slopes = core_slopes(net, &pass);
    let w_ov_t = net.w_ov.transposed();
    let w_vv_t = net.w_vv.transposed();
    let steps = task.len();
    let mut deltas = vec![Vec::new(); steps];
    for t in (0..steps).rev() {
        let direct = w_ov_t.mul_vec(&capital_deltas[t]);
        let delta: Vec<f64> = if t + 1 < steps {
            let recurrent = w_vv_t.mul_vec(&deltas[t + 1]);
            (0..net.units())
                .map(|j| (direct[j] + recurrent[j]) * slopes[t][j])
                .collect()
        } else {
            (0..net.units()).map(|j| direct[j] * slopes[t][j]).collect()
        };
        deltas[t] = delta;
    }
    Ok(gradients_from_deltas(net, task, &pass, &deltas, &capital_deltas))
}

/// Truncated variant: each step's readout error is propagated backwards
/// through at most `truncation` core copies, so delta_t collects
/// contributions from errors no later than t + truncation - 1. With
/// truncation >= T this equals full backpropagation through time.
pub fn bptt_truncated(
    net: &RecurrentNet,
    task: &SequenceTask,
    truncation: usize,
) -> Result<BpttGradients, RecurrentError> {
    if truncation == 0 {
        return Err(RecurrentError::BadConfig(
            "truncation must be at least one step".into(),
        ));
    }
    let pass = bptt_pass(net, task)?;
    let capital_deltas = readout_deltas(net, &pass);
    let slopes = core_slopes(net, &pass);
    let w_ov_t = net.w_ov.transposed();
    let w_vv_t = net.w_vv.transposed();
    let steps = task.len();
    let n = net.units();
    let mut deltas = vec![vec![0.0; n]; steps];
    for s in 0..steps {
        let direct = w_ov_t.mul_vec(&capital_deltas[s]);
        let mut carried: Vec<f64> = (0..n).map(|j| direct[j] * slopes[s][j]).collect();
        for (j, c) in carried.iter().enumerate() {
            deltas[s][j] += c;
        }
        for depth in 1..truncation {
            if depth > s {
                break;
            }
            let t = s - depth;
            let propagated = w_vv_t.mul_vec(&carried);
            carried = (0..n).map(|j| propagated[j] * slopes[t][j]).collect();
            for (j, c) in carried.iter().enumerate() {
                deltas[t][j] += c;
            }
        }
    }
    Ok(gradients_from_deltas(net, task, &pass, &deltas, &capital_deltas))
}

/// One gradient-descent step on the sequence energy: every parameter moves
/// by -eta times its gradient. Returns the energy before the update.
pub fn bptt_step(
    net: &mut RecurrentNet,
    task: &SequenceTask,
    eta: f64,
) -> Result<f64, RecurrentError> {
    if !eta.is_finite() {
        return Err(RecurrentError::BadConfig(format!(
            "learning rate must be finite, got {eta}"
        )));
    }
    let gradients = bptt_gradients(net, task)?;
    let flat = gradients.flatten();
    let mut params = net.flatten_params();
    for (p, g) in params.iter_mut().zip(&flat) {
        *p -= eta * g;
    }
    net.assign_params(&params);
    Ok(gradients.energy)
}

/// Maximum normalized deviation between analytic sequence-energy gradients
/// and central finite differences over every parameter.
pub fn bptt_gradient_deviation(
    net: &RecurrentNet,
    task: &SequenceTask,
    h: f64,
) -> Result<f64, RecurrentError> {
    let analytic = bptt_gradients(net, task)?.flatten();
    let params = net.flatten_params();
    let mut probe = net.clone();
    let numeric = crate::numerics::finite_diff_gradient(
        |p| {
            probe.assign_params(p);
            sequence_energy(&probe, task).expect("audit forward pass")
        },
        &params,
        h,
    );
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs()))
        .fold(0.0, f64::max))
}
