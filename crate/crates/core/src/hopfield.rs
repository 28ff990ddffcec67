//! Binary associative memory: pattern containers, Hebb-rule weights,
//! deterministic and stochastic spin dynamics, energy bookkeeping, order
//! parameters, cross-talk and error statistics.
//!
//! Conventions used throughout: spins and pattern bits live in {-1,+1},
//! sgn(0) = +1, and one "sweep" of asynchronous dynamics means N single-site
//! updates.

use crate::numerics::{erfc, Matrix, RandomStream, SymmetricMatrix};
use thiserror::Error;

/// Errors raised by associative-memory operations.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum HopfieldError {
    #[error("pattern length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("overlap matrix is singular (linearly dependent patterns)")]
    SingularOverlap,

    #[error("mixed states need an odd number of components, got {0}")]
    EvenMixture(usize),

    #[error("pattern index {index} out of range for p = {p}")]
    PatternIndex { index: usize, p: usize },

    #[error("state length {state} does not match network size {n}")]
    StateSize { state: usize, n: usize },

    #[error("invalid pattern file: {0}")]
    BadPatternFile(String),
}

/// Sign convention used everywhere in the spin dynamics: sgn(0) = +1.
pub fn sgn(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// A set of p patterns of N bits each, entries in {-1,+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    bits: Vec<Vec<i8>>,
    n: usize,
}

impl PatternSet {
    /// Wraps explicit patterns; every entry must be +1 or -1 and all rows
    /// must share one length.
    pub fn new(bits: Vec<Vec<i8>>) -> Result<Self, HopfieldError> {
        let n = bits.first().map_or(0, Vec::len);
        if n == 0 || bits.is_empty() {
            return Err(HopfieldError::BadPatternFile(
                "need at least one nonempty pattern".into(),
            ));
        }
        for row in &bits {
            if row.len() != n {
                return Err(HopfieldError::LengthMismatch { a: n, b: row.len() });
            }
            if row.iter().any(|&b| b != 1 && b != -1) {
                return Err(HopfieldError::BadPatternFile(
                    "entries must be +1 or -1".into(),
                ));
            }
        }
        Ok(Self { bits, n })
    }

    /// Draws p random patterns of N unbiased +-1 bits.
    pub fn random(p: usize, n: usize, stream: &mut RandomStream) -> Self {
        let bits = (0..p)
            .map(|_| (0..n).map(|_| stream.sign()).collect())
            .collect();
        Self { bits, n }
    }

    pub fn p(&self) -> usize {
        self.bits.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Storage capacity alpha = p/N.
    pub fn alpha(&self) -> f64 {
        self.p() as f64 / self.n as f64
    }

    pub fn pattern(&self, mu: usize) -> &[i8] {
        &self.bits[mu]
    }

    pub fn patterns(&self) -> impl Iterator<Item = &[i8]> {
        self.bits.iter().map(Vec::as_slice)
    }

    /// Parses the plain-text format: first line "p N", then p lines of N
    /// space-separated +-1 integers.
    pub fn parse(text: &str) -> Result<Self, HopfieldError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| HopfieldError::BadPatternFile("empty file".into()))?;
        let mut head = header.split_whitespace();
        let p: usize = head
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| HopfieldError::BadPatternFile("bad header".into()))?;
        let n: usize = head
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| HopfieldError::BadPatternFile("bad header".into()))?;
        let mut bits = Vec::with_capacity(p);
        for _ in 0..p {
            let line = lines
                .next()
                .ok_or_else(|| HopfieldError::BadPatternFile("missing pattern row".into()))?;
            let row: Result<Vec<i8>, _> = line
                .split_whitespace()
                .map(|t| t.parse::<i8>())
                .collect();
            let row =
                row.map_err(|e| HopfieldError::BadPatternFile(format!("bad entry: {e}")))?;
            if row.len() != n {
                return Err(HopfieldError::LengthMismatch { a: n, b: row.len() });
            }
            bits.push(row);
        }
        Self::new(bits)
    }

    /// Serializes back to the plain-text format.
    pub fn render(&self) -> String {
        let mut out = format!("{} {}\n", self.p(), self.n);
        for row in &self.bits {
            let line: Vec<String> = row.iter().map(|b| b.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Whether Hebb weights keep or zero the self-coupling diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalMode {
    Kept,
    Zeroed,
}

/// Site visitation order for asynchronous updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// All spins updated simultaneously from the old state.
    Synchronous,
    /// One sweep of N random sites drawn with replacement.
    AsyncRandom,
    /// One sweep visiting sites 0..N in order.
    AsyncTypewriter,
}

/// Symmetric-weight binary network with per-site thresholds.
#[derive(Debug, Clone)]
pub struct HopfieldNet {
    weights: SymmetricMatrix,
    thresholds: Vec<f64>,
    diagonal_mode: DiagonalMode,
}

impl HopfieldNet {
    pub fn n(&self) -> usize {
        self.thresholds.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn weights(&self) -> &SymmetricMatrix {
        &self.weights
    }

    pub fn threshold(&self, i: usize) -> f64 {
        self.thresholds[i]
    }

    pub fn diagonal_mode(&self) -> DiagonalMode {
        self.diagonal_mode
    }

    /// Builds a net from an explicit symmetric weight matrix.
    pub fn from_weights(weights: SymmetricMatrix, thresholds: Vec<f64>) -> Self {
        assert_eq!(weights.dimension(), thresholds.len());
        Self {
            weights,
            thresholds,
            diagonal_mode: DiagonalMode::Kept,
        }
    }

    /// Local field b_i = sum_j w_ij S_j - theta_i.
    pub fn local_field(&self, state: &SpinState, i: usize) -> f64 {
        let mut b = 0.0;
        for j in 0..self.n() {
            b += self.weights.get(i, j) * state.spins[j] as f64;
        }
        b - self.thresholds[i]
    }
}

/// Network state: N spins in {-1,+1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinState {
    spins: Vec<i8>,
}

impl SpinState {
    pub fn new(spins: Vec<i8>) -> Self {
        assert!(spins.iter().all(|&s| s == 1 || s == -1));
        Self { spins }
    }

    pub fn from_pattern(pattern: &[i8]) -> Self {
        Self::new(pattern.to_vec())
    }

    pub fn random(n: usize, stream: &mut RandomStream) -> Self {
        Self {
            spins: (0..n).map(|_| stream.sign()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn flipped(&self) -> SpinState {
        Self {
            spins: self.spins.iter().map(|&s| -s).collect(),
        }
    }

    /// Overlap m_mu = (1/N) sum_i S_i xi_i with a pattern.
    pub fn overlap(&self, pattern: &[i8]) -> f64 {
        assert_eq!(self.len(), pattern.len());
        let dot: i64 = self
            .spins
            .iter()
            .zip(pattern)
            .map(|(&s, &x)| (s as i64) * (x as i64))
            .sum();
        dot as f64 / self.len() as f64
    }
}

/// Running record of the overlap order parameter m_mu(T) along stochastic
/// dynamics, plus its steady-state mean and standard error after a
/// configurable transient.
#[derive(Debug, Clone)]
pub struct OrderParameterTrace {
    /// m_mu after each sweep, averaged over time up to that sweep.
    pub running_mean: Vec<f64>,
    /// Instantaneous overlap after each sweep.
    pub instantaneous: Vec<f64>,
    /// Mean over sweeps after the transient cut.
    pub steady_mean: f64,
    /// Standard error of that mean (treating post-transient sweeps as
    /// independent; an underestimate when sweeps correlate).
    pub steady_se: f64,
    /// Sweeps discarded as transient.
    pub transient: usize,
}

impl OrderParameterTrace {
    fn from_series(instantaneous: Vec<f64>, transient: usize) -> Self {
        let mut running_mean = Vec::with_capacity(instantaneous.len());
        let mut acc = 0.0;
        for (t, &m) in instantaneous.iter().enumerate() {
            acc += m;
            running_mean.push(acc / (t + 1) as f64);
        }
        let steady: &[f64] = if transient < instantaneous.len() {
            &instantaneous[transient..]
        } else {
            &instantaneous[..]
        };
        let count = steady.len().max(1) as f64;
        let mean = steady.iter().sum::<f64>() / count;
        let var = steady.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / count;
        Self {
            running_mean,
            instantaneous,
            steady_mean: mean,
            steady_se: (var / count).sqrt(),
            transient,
        }
    }
}

/// Hebb's rule: w_ij = (1/N) sum_mu xi_i^mu xi_j^mu, thresholds all zero.
pub fn hebb_weights(patterns: &PatternSet, diagonal_mode: DiagonalMode) -> HopfieldNet {
    let n = patterns.n();
    let inv_n = 1.0 / n as f64;
    let mut weights = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            if i == j && diagonal_mode == DiagonalMode::Zeroed {
                continue;
            }
            let mut sum = 0i64;
            for mu in 0..patterns.p() {
                let row = patterns.pattern(mu);
                sum += row[i] as i64 * row[j] as i64;
            }
            weights.set(i, j, sum as f64 * inv_n);
        }
    }
    HopfieldNet {
        weights,
        thresholds: vec![0.0; n],
        diagonal_mode,
    }
}

/// The overlap-corrected rule w_ij = (1/N) sum_{mu nu} xi_i^mu (Q^-1)_{mu nu}
/// xi_j^nu with Q_{mu nu} = (1/N) xi^mu . xi^nu. Every stored pattern becomes
/// an exact linear fixed point: sum_j w_ij xi_j^nu = xi_i^nu.
pub fn hebb_pseudoinverse(patterns: &PatternSet) -> Result<HopfieldNet, HopfieldError> {
    let n = patterns.n();
    let p = patterns.p();
    let inv_n = 1.0 / n as f64;
    let q = Matrix::from_fn(p, p, |mu, nu| {
        let (a, b) = (patterns.pattern(mu), patterns.pattern(nu));
        let dot: i64 = a.iter().zip(b).map(|(&x, &y)| x as i64 * y as i64).sum();
        dot as f64 * inv_n
    });
    let q_inv = q.inverse().map_err(|_| HopfieldError::SingularOverlap)?;
    // w_ij = (1/N) sum_mu xi_i^mu (sum_nu (Q^-1)_{mu nu} xi_j^nu).
    let mut projected = vec![vec![0.0f64; n]; p];
    for mu in 0..p {
        for j in 0..n {
            let mut acc = 0.0;
            for nu in 0..p {
                acc += q_inv[(mu, nu)] * patterns.pattern(nu)[j] as f64;
            }
            projected[mu][j] = acc;
        }
    }
    let mut weights = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for mu in 0..p {
                acc += patterns.pattern(mu)[i] as f64 * projected[mu][j];
            }
            weights.set(i, j, acc * inv_n);
        }
    }
    Ok(HopfieldNet {
        weights,
        thresholds: vec![0.0; n],
        diagonal_mode: DiagonalMode::Kept,
    })
}

/// Number of differing positions; equals (1/4) sum (a_i - b_i)^2 for +-1
/// patterns.
pub fn hamming_distance(a: &[i8], b: &[i8]) -> Result<usize, HopfieldError> {
    if a.len() != b.len() {
        return Err(HopfieldError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// One deterministic update step: S_i <- sgn(sum_j w_ij S_j - theta_i),
/// applied synchronously to all sites or as one asynchronous sweep.
pub fn update_deterministic(
    net: &HopfieldNet,
    state: &SpinState,
    mode: UpdateMode,
    stream: &mut RandomStream,
) -> Result<SpinState, HopfieldError> {
    let n = net.n();
    if state.len() != n {
        return Err(HopfieldError::StateSize {
            state: state.len(),
            n,
        });
    }
    let mut next = state.clone();
    match mode {
        UpdateMode::Synchronous => {
            for i in 0..n {
                next.spins[i] = sgn(net.local_field(state, i));
            }
        }
        UpdateMode::AsyncRandom => {
            for _ in 0..n {
                let i = stream.below(n);
                next.spins[i] = sgn(net.local_field(&next, i));
            }
        }
        UpdateMode::AsyncTypewriter => {
            for i in 0..n {
                next.spins[i] = sgn(net.local_field(&next, i));
            }
        }
    }
    Ok(next)
}

/// Configuration for stochastic dynamics.
#[derive(Debug, Clone, Copy)]
pub struct StochasticConfig {
    /// Noise parameter beta = 1/T; None means the deterministic beta -> inf
    /// limit.
    pub beta: Option<f64>,
    /// Sweeps to run (one sweep = N random single-site updates).
    pub sweeps: usize,
    /// Sweeps discarded before steady-state averaging; defaults to
    /// max(100, N) when None.
    pub transient: Option<usize>,
    /// Pattern index whose overlap is traced.
    pub traced_pattern: usize,
}

/// Stochastic asynchronous dynamics: each chosen spin is set to +1 with
/// probability P(b) = 1/(1 + e^{-2 beta b}). Records the overlap with one
/// stored pattern after every sweep.
pub fn update_stochastic(
    net: &HopfieldNet,
    state: &SpinState,
    patterns: &PatternSet,
    config: &StochasticConfig,
    stream: &mut RandomStream,
) -> Result<(SpinState, OrderParameterTrace), HopfieldError> {
    let n = net.n();
    if state.len() != n {
        return Err(HopfieldError::StateSize {
            state: state.len(),
            n,
        });
    }
    if config.traced_pattern >= patterns.p() {
        return Err(HopfieldError::PatternIndex {
            index: config.traced_pattern,
            p: patterns.p(),
        });
    }
    if let Some(beta) = config.beta {
        assert!(beta >= 0.0, "beta must be nonnegative");
    }
    let traced = patterns.pattern(config.traced_pattern);
    let mut current = state.clone();
    // Cached fields h_i = sum_j w_ij S_j; refreshed incrementally on flips,
    // which costs O(N) per actual flip instead of O(N) per proposal.
    let mut fields: Vec<f64> = (0..n)
        .map(|i| net.local_field(&current, i) + net.thresholds[i])
        .collect();
    let mut series = Vec::with_capacity(config.sweeps);
    for _ in 0..config.sweeps {
        for _ in 0..n {
            let i = stream.below(n);
            let b = fields[i] - net.thresholds[i];
            let new_spin = match config.beta {
                // beta -> inf reduces to the deterministic rule.
                None => sgn(b),
                Some(beta) => {
                    let p_up = 1.0 / (1.0 + (-2.0 * beta * b).exp());
                    if stream.bernoulli(p_up) {
                        1
                    } else {
                        -1
                    }
                }
            };
            let delta = (new_spin - current.spins[i]) as f64;
            if delta != 0.0 {
                current.spins[i] = new_spin;
                for j in 0..n {
                    fields[j] += net.weights.get(j, i) * delta;
                }
            }
        }
        series.push(current.overlap(traced));
    }
    let transient = config.transient.unwrap_or_else(|| n.max(100));
    Ok((current, OrderParameterTrace::from_series(series, transient)))
}

/// Energy H = -1/2 sum_ij w_ij S_i S_j + sum_i theta_i S_i.
pub fn energy(net: &HopfieldNet, state: &SpinState) -> f64 {
    let n = net.n();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += net.weights.get(i, j) * state.spins[i] as f64 * state.spins[j] as f64;
        }
    }
    let linear: f64 = (0..n)
        .map(|i| net.thresholds[i] * state.spins[i] as f64)
        .sum();
    -0.5 * quad + linear
}

/// Cross-talk term of pattern nu at site i:
/// C_i^nu = -xi_i^nu (1/N) sum_{j != i} sum_{mu != nu} xi_i^mu xi_j^mu xi_j^nu.
/// The bit flips in one asynchronous step started from pattern nu iff C > 1.
pub fn cross_talk(patterns: &PatternSet, i: usize, nu: usize) -> f64 {
    let n = patterns.n();
    let xi_nu = patterns.pattern(nu);
    let mut total = 0i64;
    for mu in 0..patterns.p() {
        if mu == nu {
            continue;
        }
        let xi_mu = patterns.pattern(mu);
        let mut inner = 0i64;
        for j in 0..n {
            if j == i {
                continue;
            }
            inner += xi_mu[j] as i64 * xi_nu[j] as i64;
        }
        total += xi_mu[i] as i64 * inner;
    }
    -(xi_nu[i] as f64) * total as f64 / n as f64
}

/// Monte-Carlo estimate of the one-step error probability
/// P(C_i^nu > 1) over random pattern sets, with its binomial standard error.
///
/// Trials are amortized: each fresh (pattern set, nu) draw is evaluated at
/// every site i via the precomputed overlaps R_{mu nu} = sum_j xi_j^mu
/// xi_j^nu, which costs O(Np) per N trials instead of O(Np) per trial. Sites
/// within one draw share patterns, so they are weakly correlated; the
/// correlation is O(1/N) and does not bias the estimate.
pub fn one_step_error_mc(
    n: usize,
    p: usize,
    trials: usize,
    stream: &mut RandomStream,
) -> (f64, f64) {
    assert!(n >= 1 && p >= 1 && trials >= 1);
    if p == 1 {
        // No cross-talk without competing patterns.
        return (0.0, 0.0);
    }
    let mut errors = 0usize;
    let mut done = 0usize;
    while done < trials {
        let patterns = PatternSet::random(p, n, stream);
        let nu = stream.below(p);
        let xi_nu = patterns.pattern(nu);
        // R_mu = sum_j xi_j^mu xi_j^nu for all mu at once.
        let r: Vec<i64> = (0..p)
            .map(|mu| {
                let xi_mu = patterns.pattern(mu);
                xi_mu
                    .iter()
                    .zip(xi_nu)
                    .map(|(&a, &b)| a as i64 * b as i64)
                    .sum()
            })
            .collect();
        let batch = (trials - done).min(n);
        for i in 0..batch {
            // sum_{j != i} xi_i^mu xi_j^mu xi_j^nu = xi_i^mu (R_mu - xi_i^mu xi_i^nu);
            // xi_i^mu xi_i^mu = 1 collapses the correction to xi_i^nu.
            let mut total = 0i64;
            for mu in 0..p {
                if mu == nu {
                    continue;
                }
                total += patterns.pattern(mu)[i] as i64 * r[mu];
            }
            total -= (p as i64 - 1) * xi_nu[i] as i64;
            let c = -(xi_nu[i] as f64) * total as f64 / n as f64;
            if c > 1.0 {
                errors += 1;
            }
        }
        done += batch;
    }
    let estimate = errors as f64 / trials as f64;
    let se = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    (estimate, se)
}

/// Gaussian cross-talk theory: P_error = (1 - erf(1/sqrt(2 alpha)))/2.
pub fn p_error_formula(alpha: f64) -> f64 {
    assert!(alpha > 0.0, "alpha must be positive");
    0.5 * erfc(1.0 / (2.0 * alpha).sqrt())
}

/// Componentwise sign of a signed sum of stored patterns, e.g.
/// xi^mix_i = sgn(xi_i^1 + xi_i^2 + xi_i^3). The number of components must
/// be odd so no tie can occur.
pub fn mixed_state(
    patterns: &PatternSet,
    indices: &[usize],
    signs: &[i8],
) -> Result<Vec<i8>, HopfieldError> {
    if indices.len() % 2 == 0 {
        return Err(HopfieldError::EvenMixture(indices.len()));
    }
    if indices.len() != signs.len() {
        return Err(HopfieldError::LengthMismatch {
            a: indices.len(),
            b: signs.len(),
        });
    }
    for &mu in indices {
        if mu >= patterns.p() {
            return Err(HopfieldError::PatternIndex {
                index: mu,
                p: patterns.p(),
            });
        }
    }
    let n = patterns.n();
    let mut mix = Vec::with_capacity(n);
    for i in 0..n {
        let sum: i64 = indices
            .iter()
            .zip(signs)
            .map(|(&mu, &s)| s as i64 * patterns.pattern(mu)[i] as i64)
            .sum();
        mix.push(sgn(sum as f64));
    }
    Ok(mix)
}
