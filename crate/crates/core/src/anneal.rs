//! Markov-chain Monte-Carlo engine: Metropolis and Glauber kernels, exact
//! detailed-balance and stationarity checks on enumerable models, simulated
//! annealing with geometric schedules, and three combinatorial energy
//! models (traveling salesman, k-queens, double digest).

use crate::hopfield::{energy as spin_state_energy, HopfieldNet, SpinState};
use crate::numerics::RandomStream;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnnealError {
    #[error("instance file is malformed: {0}")]
    BadInstanceFile(String),
    #[error("fragment sets do not share a total length: {0:?}")]
    InconsistentTotals(Vec<u64>),
    #[error("not a permutation of 0..{expected}: {got:?}")]
    BadPermutation { expected: usize, got: Vec<usize> },
    #[error("matrix entries must be 0 or 1")]
    NotBinary,
    #[error("need at least {needed} for {what}, got {got}")]
    TooSmall {
        what: &'static str,
        needed: usize,
        got: usize,
    },
}

/// A system that simulated annealing can minimize. Proposals must be
/// symmetric (the probability of suggesting c -> c' equals that of
/// c' -> c) and report the exact energy difference of the candidate:
/// |delta_h - (energy(candidate) - energy(config))| < 1e-9.
pub trait EnergyModel {
    type Config: Clone;
    fn energy(&self, config: &Self::Config) -> f64;
    fn propose(
        &self,
        config: &Self::Config,
        stream: &mut RandomStream,
    ) -> (Self::Config, f64);
    fn is_valid(&self, config: &Self::Config) -> bool;
    /// Number of elementary degrees of freedom; one sweep makes this many
    /// proposals.
    fn degrees_of_freedom(&self, config: &Self::Config) -> usize;
}

/// A model whose full configuration space can be listed, so that transition
/// matrices, detailed balance, and stationarity can be checked exactly.
pub trait EnumerableModel: EnergyModel
where
    Self::Config: PartialEq,
{
    fn states(&self) -> Vec<Self::Config>;
    /// Probability that `propose` suggests `to` when at `from` (zero when
    /// the move is not in the proposal set).
    fn proposal_probability(&self, from: &Self::Config, to: &Self::Config) -> f64;
}

/// Acceptance rule for proposed moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Accept with probability 1 when the energy does not increase, else
    /// e^{-beta delta_h}.
    Metropolis,
    /// Accept with probability 1/(1 + e^{beta delta_h}), the acceptance form
    /// of the single-unit stochastic rule.
    Glauber,
}

impl Kernel {
    pub fn acceptance(self, delta_h: f64, beta: f64) -> f64 {
        assert!(beta >= 0.0, "beta must be nonnegative");
        match self {
            Kernel::Metropolis => {
                if delta_h <= 0.0 {
                    1.0
                } else {
                    (-beta * delta_h).exp()
                }
            }
            Kernel::Glauber => {
                // Stable logistic form; for x >= 0 it also guarantees the
                // result never exceeds e^{-x}, keeping the Metropolis
                // dominance exact in floating point.
                let x = beta * delta_h;
                if x >= 0.0 {
                    let e = (-x).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + x.exp())
                }
            }
        }
    }
}

fn kernel_step<M: EnergyModel>(
    kernel: Kernel,
    model: &M,
    config: &mut M::Config,
    beta: f64,
    stream: &mut RandomStream,
) -> (bool, f64) {
    let (candidate, delta_h) = model.propose(config, stream);
    let accept = kernel.acceptance(delta_h, beta);
    if accept >= 1.0 || stream.uniform() < accept {
        *config = candidate;
        (true, delta_h)
    } else {
        (false, 0.0)
    }
}

/// One Metropolis move: propose, then accept with probability 1 if the
/// energy does not increase, else e^{-beta delta_h}. Returns whether the
/// candidate was accepted.
pub fn metropolis_step<M: EnergyModel>(
    model: &M,
    config: &mut M::Config,
    beta: f64,
    stream: &mut RandomStream,
) -> bool {
    kernel_step(Kernel::Metropolis, model, config, beta, stream).0
}

/// One Glauber move: propose, then accept with probability
/// 1/(1 + e^{beta delta_h}). Returns whether the candidate was accepted.
pub fn glauber_step<M: EnergyModel>(
    model: &M,
    config: &mut M::Config,
    beta: f64,
    stream: &mut RandomStream,
) -> bool {
    kernel_step(Kernel::Glauber, model, config, beta, stream).0
}

fn boltzmann_weights<M>(model: &M, beta: f64) -> (Vec<M::Config>, Vec<f64>)
where
    M: EnumerableModel,
    M::Config: PartialEq,
{
    let states = model.states();
    let mut weights: Vec<f64> = states
        .iter()
        .map(|s| (-beta * model.energy(s)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    (states, weights)
}

/// |P(a) p_{a->b} - P(b) p_{b->a}| from exact transition probabilities,
/// with P the Boltzmann distribution over the model's full state list.
pub fn detailed_balance_residual<M>(
    kernel: Kernel,
    model: &M,
    beta: f64,
    a: &M::Config,
    b: &M::Config,
) -> f64
where
    M: EnumerableModel,
    M::Config: PartialEq,
{
    let (states, pi) = boltzmann_weights(model, beta);
    let index = |c: &M::Config| {
        states
            .iter()
            .position(|s| s == c)
            .expect("state must be in the enumerated space")
    };
    let (ia, ib) = (index(a), index(b));
    let ha = model.energy(a);
    let hb = model.energy(b);
    let forward = pi[ia] * model.proposal_probability(a, b) * kernel.acceptance(hb - ha, beta);
    let backward = pi[ib] * model.proposal_probability(b, a) * kernel.acceptance(ha - hb, beta);
    (forward - backward).abs()
}

/// Maximum detailed-balance residual over all unordered state pairs.
pub fn max_detailed_balance_residual<M>(kernel: Kernel, model: &M, beta: f64) -> f64
where
    M: EnumerableModel,
    M::Config: PartialEq,
{
    let states = model.states();
    let mut worst = 0.0f64;
    for (i, a) in states.iter().enumerate() {
        for b in states.iter().skip(i + 1) {
            worst = worst.max(detailed_balance_residual(kernel, model, beta, a, b));
        }
    }
    worst
}

/// Max-norm residual of pi P - pi, where P is the exact transition matrix
/// (proposal times acceptance, diagonal absorbing the rejected mass) and pi
/// the Boltzmann distribution. Both kernels must leave pi stationary.
pub fn stationarity_residual<M>(kernel: Kernel, model: &M, beta: f64) -> f64
where
    M: EnumerableModel,
    M::Config: PartialEq,
{
    let (states, pi) = boltzmann_weights(model, beta);
    let n = states.len();
    let mut flow = vec![0.0f64; n];
    for (l, from) in states.iter().enumerate() {
        let h_from = model.energy(from);
        let mut stay = 1.0;
        for (k, to) in states.iter().enumerate() {
            if k == l {
                continue;
            }
            let p = model.proposal_probability(from, to)
                * kernel.acceptance(model.energy(to) - h_from, beta);
            stay -= p;
            flow[k] += pi[l] * p;
        }
        flow[l] += pi[l] * stay;
    }
    flow.iter()
        .zip(&pi)
        .map(|(f, p)| (f - p).abs())
        .fold(0.0, f64::max)
}

/// Geometric annealing schedule: stage s runs at
/// beta_initial * multiplier^s for sweeps_per_stage sweeps.
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub beta_initial: f64,
    pub multiplier: f64,
    pub sweeps_per_stage: usize,
    pub stages: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            beta_initial: 0.5,
            multiplier: 1.1,
            sweeps_per_stage: 1000,
            stages: 50,
        }
    }
}

/// Result of one annealing run.
#[derive(Debug, Clone)]
pub struct AnnealOutcome<C> {
    pub best: C,
    pub best_energy: f64,
    /// Mean instantaneous energy per stage.
    pub stage_mean_energy: Vec<f64>,
}

/// Runs the kernel through the schedule's stages with geometrically
/// increasing beta, tracking the best configuration ever visited. The best
/// energy is recomputed from scratch on each improvement, so accumulated
/// delta_h rounding never contaminates the reported minimum.
pub fn anneal<M: EnergyModel>(
    model: &M,
    initial: M::Config,
    schedule: &Schedule,
    kernel: Kernel,
    stream: &mut RandomStream,
) -> AnnealOutcome<M::Config> {
    assert!(schedule.stages >= 1, "schedule needs at least one stage");
    assert!(schedule.sweeps_per_stage >= 1, "stages need at least one sweep");
    assert!(
        schedule.beta_initial > 0.0 && schedule.multiplier > 0.0,
        "schedule must have positive beta and multiplier"
    );
    let mut config = initial;
    let mut energy = model.energy(&config);
    let mut best = config.clone();
    let mut best_energy = energy;
    let mut beta = schedule.beta_initial;
    let mut trace = Vec::with_capacity(schedule.stages);
    for _ in 0..schedule.stages {
        let moves = schedule.sweeps_per_stage * model.degrees_of_freedom(&config).max(1);
        let mut stage_sum = 0.0;
        for _ in 0..moves {
            let (accepted, delta_h) = kernel_step(kernel, model, &mut config, beta, stream);
            if accepted {
                energy += delta_h;
                if energy < best_energy {
                    best_energy = model.energy(&config);
                    energy = best_energy;
                    best = config.clone();
                }
            }
            stage_sum += energy;
        }
        trace.push(stage_sum / moves as f64);
        beta *= schedule.multiplier;
    }
    AnnealOutcome {
        best,
        best_energy,
        stage_mean_energy: trace,
    }
}

// ---------------------------------------------------------------------------
// Traveling salesman
// ---------------------------------------------------------------------------

/// k x k 0/1 visit matrix: row m carries a 1 in column j when city m is the
/// j-th stop. Valid tours have exactly one 1 per row and per column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TourMatrix {
    k: usize,
    cells: Vec<u8>,
}

impl TourMatrix {
    /// Builds the matrix of the tour that visits `order[j]` at stop j.
    pub fn from_order(order: &[usize]) -> Result<Self, AnnealError> {
        let k = order.len();
        validate_permutation(order, k)?;
        let mut cells = vec![0u8; k * k];
        for (j, &city) in order.iter().enumerate() {
            cells[city * k + j] = 1;
        }
        Ok(TourMatrix { k, cells })
    }

    pub fn from_cells(k: usize, cells: Vec<u8>) -> Result<Self, AnnealError> {
        if cells.len() != k * k {
            return Err(AnnealError::BadInstanceFile(format!(
                "expected {} cells, got {}",
                k * k,
                cells.len()
            )));
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(AnnealError::NotBinary);
        }
        Ok(TourMatrix { k, cells })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, city: usize, stop: usize) -> u8 {
        self.cells[city * self.k + stop]
    }

    /// City visited at each stop, if the matrix is a valid tour.
    pub fn order(&self) -> Option<Vec<usize>> {
        if !self.is_valid_tour() {
            return None;
        }
        let mut order = vec![0usize; self.k];
        for city in 0..self.k {
            for stop in 0..self.k {
                if self.get(city, stop) == 1 {
                    order[stop] = city;
                }
            }
        }
        Some(order)
    }

    /// Exactly one 1 per row and per column.
    pub fn is_valid_tour(&self) -> bool {
        (0..self.k).all(|m| (0..self.k).map(|j| self.get(m, j) as usize).sum::<usize>() == 1)
            && (0..self.k)
                .all(|j| (0..self.k).map(|m| self.get(m, j) as usize).sum::<usize>() == 1)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.k {
            self.cells.swap(a * self.k + j, b * self.k + j);
        }
    }
}

fn validate_permutation(perm: &[usize], n: usize) -> Result<(), AnnealError> {
    let mut seen = vec![false; n];
    let ok = perm.len() == n
        && perm.iter().all(|&i| {
            if i >= n || seen[i] {
                false
            } else {
                seen[i] = true;
                true
            }
        });
    if ok {
        Ok(())
    } else {
        Err(AnnealError::BadPermutation {
            expected: n,
            got: perm.to_vec(),
        })
    }
}

/// Tour cost with soft constraints: H = L + (A/2) sum_m (1 - sum_j M_mj)^2
/// + (B/2) sum_j (1 - sum_m M_mj)^2, where L is the symmetric path length
/// (1/2) sum_{mnj} d_mn M_mj (M_{n,j-1} + M_{n,j+1}) with cyclic stops.
/// Equals the plain tour length when the constraints hold.
pub fn tsp_energy(
    tour: &TourMatrix,
    coords: &[(f64, f64)],
    penalty_a: f64,
    penalty_b: f64,
) -> f64 {
    let k = tour.k;
    assert_eq!(coords.len(), k, "one coordinate pair per city");
    let dist = |m: usize, n: usize| {
        let (xa, ya) = coords[m];
        let (xb, yb) = coords[n];
        ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt()
    };
    // Occupants of each stop; handles invalid matrices with any column sums.
    let occupants: Vec<Vec<usize>> = (0..k)
        .map(|j| (0..k).filter(|&m| tour.get(m, j) == 1).collect())
        .collect();
    let mut length = 0.0;
    for j in 0..k {
        let next = (j + 1) % k;
        for &m in &occupants[j] {
            for &n in &occupants[next] {
                length += dist(m, n);
            }
        }
    }
    let mut penalty = 0.0;
    for m in 0..k {
        let row: f64 = (0..k).map(|j| tour.get(m, j) as f64).sum();
        penalty += penalty_a / 2.0 * (1.0 - row).powi(2);
    }
    for j in 0..k {
        let col: f64 = (0..k).map(|m| tour.get(m, j) as f64).sum();
        penalty += penalty_b / 2.0 * (1.0 - col).powi(2);
    }
    length + penalty
}

/// City coordinates of one traveling-salesman instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    pub coords: Vec<(f64, f64)>,
}

impl TspInstance {
    pub fn new(coords: Vec<(f64, f64)>) -> Result<Self, AnnealError> {
        if coords.len() < 2 {
            return Err(AnnealError::TooSmall {
                what: "a tour",
                needed: 2,
                got: coords.len(),
            });
        }
        Ok(TspInstance { coords })
    }

    pub fn k(&self) -> usize {
        self.coords.len()
    }

    pub fn max_distance(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, &(xa, ya)) in self.coords.iter().enumerate() {
            for &(xb, yb) in self.coords.iter().skip(i + 1) {
                best = best.max(((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt());
            }
        }
        best
    }

    /// Parses "k" on the first line, then k lines "x y".
    pub fn parse(text: &str) -> Result<Self, AnnealError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let k: usize = lines
            .next()
            .ok_or_else(|| AnnealError::BadInstanceFile("empty file".into()))?
            .trim()
            .parse()
            .map_err(|_| AnnealError::BadInstanceFile("first line must be the city count".into()))?;
        let mut coords = Vec::with_capacity(k);
        for _ in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| AnnealError::BadInstanceFile("missing coordinate line".into()))?;
            let mut fields = line.split_whitespace();
            let x = fields
                .next()
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| AnnealError::BadInstanceFile(format!("bad coordinate: {line}")))?;
            let y = fields
                .next()
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| AnnealError::BadInstanceFile(format!("bad coordinate: {line}")))?;
            coords.push((x, y));
        }
        TspInstance::new(coords)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.k());
        for &(x, y) in &self.coords {
            out.push_str(&format!("{x} {y}\n"));
        }
        out
    }
}

/// Annealable traveling-salesman model. Proposals swap two rows of the
/// visit matrix (exchanging the stops of two cities), which is symmetric
/// and preserves validity, so a valid start stays on valid tours.
#[derive(Debug, Clone)]
pub struct TspModel {
    pub instance: TspInstance,
    pub penalty_a: f64,
    pub penalty_b: f64,
}

impl TspModel {
    /// Multipliers default to twice the largest pairwise distance so that a
    /// constraint violation always costs more than any length gain.
    pub fn new(instance: TspInstance) -> Self {
        let penalty = 2.0 * instance.max_distance();
        TspModel {
            instance,
            penalty_a: penalty,
            penalty_b: penalty,
        }
    }
}

impl EnergyModel for TspModel {
    type Config = TourMatrix;

    fn energy(&self, config: &TourMatrix) -> f64 {
        tsp_energy(config, &self.instance.coords, self.penalty_a, self.penalty_b)
    }

    fn propose(&self, config: &TourMatrix, stream: &mut RandomStream) -> (TourMatrix, f64) {
        let k = config.k;
        let a = stream.below(k);
        let mut b = stream.below(k - 1);
        if b >= a {
            b += 1;
        }
        let mut candidate = config.clone();
        candidate.swap_rows(a, b);
        let delta_h = self.energy(&candidate) - self.energy(config);
        (candidate, delta_h)
    }

    fn is_valid(&self, config: &TourMatrix) -> bool {
        config.is_valid_tour()
    }

    fn degrees_of_freedom(&self, config: &TourMatrix) -> usize {
        config.k
    }
}

// ---------------------------------------------------------------------------
// k-queens
// ---------------------------------------------------------------------------

/// k x k 0/1 board; cell (i, j) holds 1 when a queen stands there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueenBoard {
    k: usize,
    cells: Vec<u8>,
}

impl QueenBoard {
    pub fn from_positions(k: usize, queens: &[(usize, usize)]) -> Result<Self, AnnealError> {
        let mut cells = vec![0u8; k * k];
        for &(i, j) in queens {
            if i >= k || j >= k {
                return Err(AnnealError::BadInstanceFile(format!(
                    "queen ({i}, {j}) is off the {k} x {k} board"
                )));
            }
            cells[i * k + j] = 1;
        }
        Ok(QueenBoard { k, cells })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.k + j]
    }

    pub fn queens(&self) -> Vec<(usize, usize)> {
        (0..self.k)
            .flat_map(|i| (0..self.k).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j) == 1)
            .collect()
    }

    /// Pairs of queens sharing a row, column, diagonal, or anti-diagonal.
    /// Distinct squares can share at most one of the four families, so the
    /// per-family pair counts add without double counting.
    pub fn attacking_pairs(&self) -> usize {
        let k = self.k;
        let mut rows = vec![0usize; k];
        let mut cols = vec![0usize; k];
        let mut diag = vec![0usize; 2 * k - 1]; // i - j + (k-1)
        let mut anti = vec![0usize; 2 * k - 1]; // i + j
        for (i, j) in self.queens() {
            rows[i] += 1;
            cols[j] += 1;
            diag[i + k - 1 - j] += 1;
            anti[i + j] += 1;
        }
        let pairs = |counts: &[usize]| {
            counts
                .iter()
                .map(|&c| c * c.saturating_sub(1) / 2)
                .sum::<usize>()
        };
        pairs(&rows) + pairs(&cols) + pairs(&diag) + pairs(&anti)
    }
}

/// True iff the board carries exactly k queens and no two share a row,
/// column, diagonal, or anti-diagonal.
pub fn kqueens_valid(board: &QueenBoard) -> bool {
    board.queens().len() == board.k && board.attacking_pairs() == 0
}

/// Annealable k-queens model: energy counts attacking pairs; proposals move
/// one uniformly chosen queen to a uniformly chosen empty cell (symmetric:
/// the reverse move picks the same queen and the vacated cell).
#[derive(Debug, Clone, Copy)]
pub struct QueensModel {
    pub k: usize,
}

impl QueensModel {
    /// One queen per row on the main diagonal; valid count, maximal clash.
    pub fn diagonal_start(&self) -> QueenBoard {
        let queens: Vec<(usize, usize)> = (0..self.k).map(|i| (i, i)).collect();
        QueenBoard::from_positions(self.k, &queens).expect("diagonal fits")
    }
}

impl EnergyModel for QueensModel {
    type Config = QueenBoard;

    fn energy(&self, config: &QueenBoard) -> f64 {
        config.attacking_pairs() as f64
    }

    fn propose(&self, config: &QueenBoard, stream: &mut RandomStream) -> (QueenBoard, f64) {
        let queens = config.queens();
        let empties = config.k * config.k - queens.len();
        if queens.is_empty() || empties == 0 {
            return (config.clone(), 0.0);
        }
        let (qi, qj) = queens[stream.below(queens.len())];
        let mut target = stream.below(empties);
        let mut candidate = config.clone();
        'outer: for i in 0..config.k {
            for j in 0..config.k {
                if config.get(i, j) == 0 {
                    if target == 0 {
                        candidate.cells[qi * config.k + qj] = 0;
                        candidate.cells[i * config.k + j] = 1;
                        break 'outer;
                    }
                    target -= 1;
                }
            }
        }
        let delta_h = self.energy(&candidate) - self.energy(config);
        (candidate, delta_h)
    }

    fn is_valid(&self, config: &QueenBoard) -> bool {
        kqueens_valid(config)
    }

    fn degrees_of_freedom(&self, _config: &QueenBoard) -> usize {
        self.k
    }
}

// ---------------------------------------------------------------------------
// Double digest
// ---------------------------------------------------------------------------

/// One double-digest instance: fragment length multisets from digesting
/// with enzyme A, with enzyme B, and with both, plus the total length.
/// Fragment sets are kept sorted in decreasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestInstance {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
    pub total: u64,
}

impl DigestInstance {
    pub fn new(
        mut a: Vec<u64>,
        mut b: Vec<u64>,
        mut c: Vec<u64>,
        total: u64,
    ) -> Result<Self, AnnealError> {
        let sums = [
            a.iter().sum::<u64>(),
            b.iter().sum::<u64>(),
            c.iter().sum::<u64>(),
        ];
        if sums.iter().any(|&s| s != total) {
            return Err(AnnealError::InconsistentTotals(sums.to_vec()));
        }
        if a.is_empty() || b.is_empty() {
            return Err(AnnealError::TooSmall {
                what: "each single digest",
                needed: 1,
                got: 0,
            });
        }
        a.sort_unstable_by(|x, y| y.cmp(x));
        b.sort_unstable_by(|x, y| y.cmp(x));
        c.sort_unstable_by(|x, y| y.cmp(x));
        Ok(DigestInstance { a, b, c, total })
    }

    /// Parses lines "L: 10000", "a: 5976 1543 ...", "b: ...", "c: ..." in
    /// any order; commas between numbers are tolerated.
    pub fn parse(text: &str) -> Result<Self, AnnealError> {
        let mut a = None;
        let mut b = None;
        let mut c = None;
        let mut total = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(':').ok_or_else(|| {
                AnnealError::BadInstanceFile(format!("expected 'tag: values', got {line}"))
            })?;
            let numbers: Result<Vec<u64>, _> = rest
                .replace(',', " ")
                .split_whitespace()
                .map(|f| {
                    f.parse::<u64>()
                        .map_err(|_| AnnealError::BadInstanceFile(format!("bad integer: {f}")))
                })
                .collect();
            let numbers = numbers?;
            match tag.trim() {
                "a" => a = Some(numbers),
                "b" => b = Some(numbers),
                "c" => c = Some(numbers),
                "L" => {
                    total = Some(*numbers.first().ok_or_else(|| {
                        AnnealError::BadInstanceFile("L line needs a value".into())
                    })?)
                }
                other => {
                    return Err(AnnealError::BadInstanceFile(format!(
                        "unknown tag: {other}"
                    )))
                }
            }
        }
        let missing = |what: &str| AnnealError::BadInstanceFile(format!("missing {what} line"));
        DigestInstance::new(
            a.ok_or_else(|| missing("a"))?,
            b.ok_or_else(|| missing("b"))?,
            c.ok_or_else(|| missing("c"))?,
            total.ok_or_else(|| missing("L"))?,
        )
    }

    pub fn render(&self) -> String {
        let join = |v: &[u64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!(
            "L: {}\na: {}\nb: {}\nc: {}\n",
            self.total,
            join(&self.a),
            join(&self.b),
            join(&self.c)
        )
    }
}

/// Orderings of the a- and b-fragments along the segment, as index
/// permutations into the instance's sorted fragment lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestOrdering {
    pub sigma: Vec<usize>,
    pub mu: Vec<usize>,
}

impl DigestOrdering {
    pub fn identity(n: usize, m: usize) -> Self {
        DigestOrdering {
            sigma: (0..n).collect(),
            mu: (0..m).collect(),
        }
    }

    pub fn random(n: usize, m: usize, stream: &mut RandomStream) -> Self {
        let mut ordering = DigestOrdering::identity(n, m);
        stream.shuffle(&mut ordering.sigma);
        stream.shuffle(&mut ordering.mu);
        ordering
    }

    /// Canonical representative of the mirror pair {(sigma, mu),
    /// (reversed sigma, reversed mu)}: both reversals describe the same
    /// physical segment read from the other end.
    pub fn mirror_canonical(&self) -> DigestOrdering {
        let mirrored = DigestOrdering {
            sigma: self.sigma.iter().rev().copied().collect(),
            mu: self.mu.iter().rev().copied().collect(),
        };
        if (&mirrored.sigma, &mirrored.mu) < (&self.sigma, &self.mu) {
            mirrored
        } else {
            self.clone()
        }
    }
}

/// Double-digest fragment lengths implied by the orderings: internal cut
/// positions of both single digests are merged (as a multiset, so
/// coincident cuts yield zero-length fragments) and the sorted gaps are
/// returned in decreasing order, padded to match the length of c.
pub fn implied_double_digest(instance: &DigestInstance, ordering: &DigestOrdering) -> Vec<u64> {
    let mut cuts = Vec::with_capacity(instance.a.len() + instance.b.len());
    let mut position = 0u64;
    for &idx in &ordering.sigma[..ordering.sigma.len() - 1] {
        position += instance.a[idx];
        cuts.push(position);
    }
    position = 0;
    for &idx in &ordering.mu[..ordering.mu.len() - 1] {
        position += instance.b[idx];
        cuts.push(position);
    }
    cuts.sort_unstable();
    let mut gaps = Vec::with_capacity(cuts.len() + 1);
    let mut previous = 0u64;
    for &cut in &cuts {
        gaps.push(cut - previous);
        previous = cut;
    }
    gaps.push(instance.total - previous);
    gaps.sort_unstable_by(|x, y| y.cmp(x));
    gaps
}

/// H(sigma, mu) = sum_j c_j^{-1} [c_j - chat_j(sigma, mu)]^2 comparing the
/// decreasing-sorted implied fragments against c. Zero exactly when the
/// implied double-digest multiset reproduces c.
pub fn digest_energy(instance: &DigestInstance, ordering: &DigestOrdering) -> f64 {
    assert!(
        validate_permutation(&ordering.sigma, instance.a.len()).is_ok()
            && validate_permutation(&ordering.mu, instance.b.len()).is_ok(),
        "orderings must permute the fragment lists"
    );
    let implied = implied_double_digest(instance, ordering);
    instance
        .c
        .iter()
        .zip(implied.iter().chain(std::iter::repeat(&0)))
        .map(|(&cj, &cje)| {
            let diff = cj as f64 - cje as f64;
            diff * diff / cj as f64
        })
        .sum()
}

/// Annealable double-digest model. Proposals reverse a uniformly chosen
/// contiguous block of 2 or 3 entries in sigma or mu; choosing the same
/// block maps the candidate back, so the scheme is symmetric.
#[derive(Debug, Clone)]
pub struct DigestModel {
    pub instance: DigestInstance,
}

impl EnergyModel for DigestModel {
    type Config = DigestOrdering;

    fn energy(&self, config: &DigestOrdering) -> f64 {
        digest_energy(&self.instance, config)
    }

    fn propose(&self, config: &DigestOrdering, stream: &mut RandomStream) -> (DigestOrdering, f64) {
        let mut candidate = config.clone();
        {
            let target: &mut Vec<usize> = if stream.below(2) == 0 && config.sigma.len() >= 2 {
                &mut candidate.sigma
            } else if config.mu.len() >= 2 {
                &mut candidate.mu
            } else {
                &mut candidate.sigma
            };
            let len = target.len();
            if len >= 2 {
                let block = if len >= 3 { 2 + stream.below(2) } else { 2 };
                let start = stream.below(len - block + 1);
                target[start..start + block].reverse();
            }
        }
        let delta_h = self.energy(&candidate) - self.energy(config);
        (candidate, delta_h)
    }

    fn is_valid(&self, config: &DigestOrdering) -> bool {
        validate_permutation(&config.sigma, self.instance.a.len()).is_ok()
            && validate_permutation(&config.mu, self.instance.b.len()).is_ok()
    }

    fn degrees_of_freedom(&self, config: &DigestOrdering) -> usize {
        config.sigma.len() + config.mu.len()
    }
}

// ---------------------------------------------------------------------------
// Small exactly-enumerable models for kernel verification
// ---------------------------------------------------------------------------

/// Model over states 0..K with listed energies; proposals pick one of the
/// other K-1 states uniformly.
#[derive(Debug, Clone)]
pub struct TabulatedModel {
    energies: Vec<f64>,
}

impl TabulatedModel {
    pub fn new(energies: Vec<f64>) -> Result<Self, AnnealError> {
        if energies.len() < 2 {
            return Err(AnnealError::TooSmall {
                what: "a state space",
                needed: 2,
                got: energies.len(),
            });
        }
        Ok(TabulatedModel { energies })
    }

    /// Two states with energies 0 and `gap`.
    pub fn two_level(gap: f64) -> Self {
        TabulatedModel {
            energies: vec![0.0, gap],
        }
    }
}

impl EnergyModel for TabulatedModel {
    type Config = usize;

    fn energy(&self, config: &usize) -> f64 {
        self.energies[*config]
    }

    fn propose(&self, config: &usize, stream: &mut RandomStream) -> (usize, f64) {
        let k = self.energies.len();
        let mut other = stream.below(k - 1);
        if other >= *config {
            other += 1;
        }
        (other, self.energies[other] - self.energies[*config])
    }

    fn is_valid(&self, config: &usize) -> bool {
        *config < self.energies.len()
    }

    fn degrees_of_freedom(&self, _config: &usize) -> usize {
        1
    }
}

impl EnumerableModel for TabulatedModel {
    fn states(&self) -> Vec<usize> {
        (0..self.energies.len()).collect()
    }

    fn proposal_probability(&self, from: &usize, to: &usize) -> f64 {
        if from == to {
            0.0
        } else {
            1.0 / (self.energies.len() - 1) as f64
        }
    }
}

/// Spin system with the associative-memory energy, single-spin-flip
/// proposals (uniform over the N spins). Enumerable for small N.
#[derive(Debug, Clone)]
pub struct SpinModel {
    pub net: HopfieldNet,
}

impl SpinModel {
    fn spin_energy(&self, spins: &[i8]) -> f64 {
        spin_state_energy(&self.net, &SpinState::new(spins.to_vec()))
    }
}

impl EnergyModel for SpinModel {
    type Config = Vec<i8>;

    fn energy(&self, config: &Vec<i8>) -> f64 {
        self.spin_energy(config)
    }

    fn propose(&self, config: &Vec<i8>, stream: &mut RandomStream) -> (Vec<i8>, f64) {
        let i = stream.below(config.len());
        let mut candidate = config.clone();
        candidate[i] = -candidate[i];
        let delta_h = self.spin_energy(&candidate) - self.spin_energy(config);
        (candidate, delta_h)
    }

    fn is_valid(&self, config: &Vec<i8>) -> bool {
        config.len() == self.net.n() && config.iter().all(|&s| s == 1 || s == -1)
    }

    fn degrees_of_freedom(&self, config: &Vec<i8>) -> usize {
        config.len()
    }
}

impl EnumerableModel for SpinModel {
    fn states(&self) -> Vec<Vec<i8>> {
        let n = self.net.n();
        (0..1usize << n)
            .map(|bits| {
                (0..n)
                    .map(|i| if bits >> i & 1 == 0 { 1i8 } else { -1i8 })
                    .collect()
            })
            .collect()
    }

    fn proposal_probability(&self, from: &Vec<i8>, to: &Vec<i8>) -> f64 {
        let differing = from
            .iter()
            .zip(to.iter())
            .filter(|(a, b)| a != b)
            .count();
        if differing == 1 {
            1.0 / from.len() as f64
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopfield::{hebb_weights, PatternSet};
    use proptest::prelude::*;

    fn fig_instance() -> TspInstance {
        // Seven cities A..G in the unit square.
        TspInstance::new(vec![
            (0.1, 0.15),
            (0.4, 0.2),
            (0.5, 0.7),
            (0.2, 0.1),
            (0.1, 0.8),
            (0.8, 0.9),
            (0.9, 0.3),
        ])
        .unwrap()
    }

    const TOUR_A: [usize; 7] = [0, 3, 1, 6, 5, 2, 4]; // A D B G F C E
    const TOUR_B: [usize; 7] = [0, 3, 6, 5, 2, 4, 1]; // A D G F C E B
    const BEST_LENGTH: f64 = 2.876454091122234;

    fn table_instance() -> DigestInstance {
        DigestInstance::new(
            vec![5976, 1543, 1319, 1120, 42],
            vec![4513, 2823, 2057, 607],
            vec![4513, 1543, 1319, 1120, 607, 514, 342, 42],
            10000,
        )
        .unwrap()
    }

    #[test]
    fn metropolis_accepts_downhill_and_at_zero_temperature() {
        for beta in [0.0, 0.5, 3.0, 1e6] {
            assert_eq!(Kernel::Metropolis.acceptance(-1.0, beta), 1.0);
            assert_eq!(Kernel::Metropolis.acceptance(0.0, beta), 1.0);
        }
        assert_eq!(Kernel::Metropolis.acceptance(7.3, 0.0), 1.0);
    }

    #[test]
    fn metropolis_uphill_rate_matches_formula() {
        let model = TabulatedModel::two_level(1.0);
        let mut stream = RandomStream::new(41);
        let trials = 100_000;
        let mut accepted = 0usize;
        for _ in 0..trials {
            let mut config = 0usize;
            if metropolis_step(&model, &mut config, 1.0, &mut stream) {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / trials as f64;
        let want = (-1.0f64).exp();
        let sigma = (want * (1.0 - want) / trials as f64).sqrt();
        assert!(
            (rate - want).abs() < 3.0 * sigma,
            "rate {rate} vs e^-1 {want}"
        );
    }

    #[test]
    fn glauber_acceptance_limits() {
        assert_eq!(Kernel::Glauber.acceptance(0.0, 2.0), 0.5);
        assert_eq!(Kernel::Glauber.acceptance(-1.0, 1e9), 1.0);
        assert_eq!(Kernel::Glauber.acceptance(1.0, 1e9), 0.0);
        assert_eq!(Kernel::Glauber.acceptance(5.0, 0.0), 0.5);
    }

    #[test]
    fn glauber_two_level_occupancy_matches_boltzmann() {
        let model = TabulatedModel::two_level(1.0);
        let mut stream = RandomStream::new(42);
        let mut config = 0usize;
        let burn_in = 1000;
        let samples = 100_000;
        for _ in 0..burn_in {
            glauber_step(&model, &mut config, 1.0, &mut stream);
        }
        let mut occupancy = 0usize;
        for _ in 0..samples {
            glauber_step(&model, &mut config, 1.0, &mut stream);
            occupancy += config;
        }
        let rate = occupancy as f64 / samples as f64;
        let want = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        let sigma = (want * (1.0 - want) / samples as f64).sqrt();
        assert!(
            (rate - want).abs() < 3.0 * sigma,
            "occupancy {rate} vs {want}"
        );
    }

    #[test]
    fn metropolis_dominates_glauber() {
        for delta_h in [-3.0, -0.1, 0.0, 0.4, 2.0, 10.0] {
            for beta in [0.0, 0.3, 1.0, 5.0] {
                assert!(
                    Kernel::Metropolis.acceptance(delta_h, beta)
                        >= Kernel::Glauber.acceptance(delta_h, beta)
                );
            }
        }
    }

    #[test]
    fn detailed_balance_two_level_exact() {
        let model = TabulatedModel::two_level(1.0);
        let residual = detailed_balance_residual(Kernel::Metropolis, &model, 1.0, &0, &1);
        assert!(residual < 1e-15, "residual {residual}");
        let equal = TabulatedModel::two_level(0.0);
        assert_eq!(
            detailed_balance_residual(Kernel::Glauber, &equal, 2.0, &0, &1),
            0.0
        );
    }

    #[test]
    fn detailed_balance_three_spin_net_all_pairs() {
        let patterns = PatternSet::new(vec![vec![1, -1, 1]]).unwrap();
        let net = hebb_weights(&patterns, crate::hopfield::DiagonalMode::Zeroed);
        let model = SpinModel { net };
        for kernel in [Kernel::Metropolis, Kernel::Glauber] {
            let worst = max_detailed_balance_residual(kernel, &model, 0.7);
            assert!(worst < 1e-12, "{kernel:?} residual {worst}");
        }
    }

    #[test]
    fn boltzmann_distribution_is_stationary_for_both_kernels() {
        let mut stream = RandomStream::new(7);
        let energies: Vec<f64> = (0..12).map(|_| stream.uniform_in(-1.0, 2.0)).collect();
        let model = TabulatedModel::new(energies).unwrap();
        for kernel in [Kernel::Metropolis, Kernel::Glauber] {
            for beta in [0.5, 1.0, 2.0] {
                let residual = stationarity_residual(kernel, &model, beta);
                assert!(residual < 1e-12, "{kernel:?} beta={beta}: {residual}");
            }
        }
    }

    #[test]
    fn zero_temperature_anneal_descends_convex_chain() {
        // States 0..=20 with H = (x - 5)^2; +-1 proposals never leave range.
        #[derive(Clone)]
        struct Chain;
        impl EnergyModel for Chain {
            type Config = i64;
            fn energy(&self, x: &i64) -> f64 {
                ((x - 5) * (x - 5)) as f64
            }
            fn propose(&self, x: &i64, stream: &mut RandomStream) -> (i64, f64) {
                let step = if stream.below(2) == 0 { 1 } else { -1 };
                let candidate = (x + step).clamp(0, 20);
                (candidate, self.energy(&candidate) - self.energy(x))
            }
            fn is_valid(&self, x: &i64) -> bool {
                (0..=20).contains(x)
            }
            fn degrees_of_freedom(&self, _x: &i64) -> usize {
                1
            }
        }
        let schedule = Schedule {
            beta_initial: 1e9,
            multiplier: 1.0,
            sweeps_per_stage: 200,
            stages: 1,
        };
        let mut stream = RandomStream::new(3);
        let outcome = anneal(&Chain, 17, &schedule, Kernel::Metropolis, &mut stream);
        assert_eq!(outcome.best, 5);
        assert_eq!(outcome.best_energy, 0.0);
        assert_eq!(outcome.stage_mean_energy.len(), 1);
    }

    #[test]
    fn tsp_energy_of_valid_tour_is_its_length() {
        let instance = fig_instance();
        let tour = TourMatrix::from_order(&TOUR_A).unwrap();
        let energy = tsp_energy(&tour, &instance.coords, 2.0, 2.0);
        assert!((energy - BEST_LENGTH).abs() < 1e-12, "H = {energy}");
        // Frozen second tour of the same instance; strictly longer.
        let other = TourMatrix::from_order(&TOUR_B).unwrap();
        let energy_b = tsp_energy(&other, &instance.coords, 2.0, 2.0);
        assert!((energy_b - 3.1959148507058766).abs() < 1e-12);
        assert!(energy < energy_b);
    }

    #[test]
    fn tsp_energy_counts_constraint_violations() {
        let zero = TourMatrix::from_cells(3, vec![0; 9]).unwrap();
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert_eq!(tsp_energy(&zero, &coords, 2.0, 2.0), 6.0);
    }

    #[test]
    fn tsp_energy_invariant_under_rotation_and_reversal() {
        let instance = fig_instance();
        let energy = |order: &[usize]| {
            tsp_energy(
                &TourMatrix::from_order(order).unwrap(),
                &instance.coords,
                2.0,
                2.0,
            )
        };
        let base = energy(&TOUR_A);
        let mut rotated = TOUR_A.to_vec();
        for _ in 0..7 {
            rotated.rotate_left(1);
            assert!((energy(&rotated) - base).abs() < 1e-12);
            let reversed: Vec<usize> = rotated.iter().rev().copied().collect();
            assert!((energy(&reversed) - base).abs() < 1e-12);
        }
    }

    #[test]
    fn seven_city_anneal_finds_the_exhaustive_optimum() {
        let model = TspModel::new(fig_instance());
        let schedule = Schedule {
            beta_initial: 1.0,
            multiplier: 1.3,
            sweeps_per_stage: 60,
            stages: 20,
        };
        let mut stream = RandomStream::new(11);
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let mut order: Vec<usize> = (0..7).collect();
            stream.shuffle(&mut order);
            let start = TourMatrix::from_order(&order).unwrap();
            let outcome = anneal(&model, start, &schedule, Kernel::Metropolis, &mut stream);
            assert!(model.is_valid(&outcome.best), "row swaps keep tours valid");
            best = best.min(outcome.best_energy);
        }
        assert!((best - BEST_LENGTH).abs() < 1e-12, "best {best}");
    }

    #[test]
    fn queen_boards_validate_the_four_constraint_families() {
        let single = QueenBoard::from_positions(1, &[(0, 0)]).unwrap();
        assert!(kqueens_valid(&single));
        let diagonal = QueenBoard::from_positions(4, &[(0, 0), (2, 2), (1, 3), (3, 1)]).unwrap();
        assert!(!kqueens_valid(&diagonal), "shared diagonal must fail");
        // A classic eight-queens arrangement.
        let solved = QueenBoard::from_positions(
            8,
            &[
                (0, 4),
                (1, 6),
                (2, 1),
                (3, 5),
                (4, 2),
                (5, 0),
                (6, 3),
                (7, 7),
            ],
        )
        .unwrap();
        assert!(kqueens_valid(&solved));
        assert_eq!(solved.attacking_pairs(), 0);
        let missing = QueenBoard::from_positions(8, &[(0, 4)]).unwrap();
        assert!(!kqueens_valid(&missing), "needs exactly k queens");
    }

    #[test]
    fn eight_queens_anneal_reaches_a_solution() {
        let model = QueensModel { k: 8 };
        let schedule = Schedule {
            beta_initial: 0.5,
            multiplier: 1.2,
            sweeps_per_stage: 100,
            stages: 25,
        };
        let mut stream = RandomStream::new(5);
        let mut solved = false;
        for _ in 0..4 {
            let outcome = anneal(
                &model,
                model.diagonal_start(),
                &schedule,
                Kernel::Metropolis,
                &mut stream,
            );
            if outcome.best_energy == 0.0 {
                assert!(kqueens_valid(&outcome.best));
                solved = true;
                break;
            }
        }
        assert!(solved, "no restart reached zero attacking pairs");
    }

    #[test]
    fn digest_toy_instance_reconstructs_exactly() {
        let instance = DigestInstance::new(vec![6, 4], vec![7, 3], vec![6, 1, 3], 10).unwrap();
        let ordering = DigestOrdering::identity(2, 2);
        assert_eq!(implied_double_digest(&instance, &ordering), vec![6, 3, 1]);
        assert_eq!(digest_energy(&instance, &ordering), 0.0);
    }

    #[test]
    fn digest_ground_truth_ordering_has_zero_energy() {
        let instance = table_instance();
        // Frozen exhaustive-search solution: a-fragments in the order
        // 1543, 5976, 1319, 1120, 42 and b-fragments 2057, 4513, 607, 2823.
        // Indices refer to the decreasing-sorted lists.
        let ordering = DigestOrdering {
            sigma: vec![1, 0, 2, 3, 4],
            mu: vec![2, 0, 3, 1],
        };
        assert_eq!(digest_energy(&instance, &ordering), 0.0);
        let scrambled = DigestOrdering::identity(5, 4);
        assert!(digest_energy(&instance, &scrambled) > 0.0);
    }

    #[test]
    fn digest_energy_mirror_invariant() {
        let instance = table_instance();
        let mut stream = RandomStream::new(9);
        for _ in 0..50 {
            let ordering = DigestOrdering::random(5, 4, &mut stream);
            let mirrored = DigestOrdering {
                sigma: ordering.sigma.iter().rev().copied().collect(),
                mu: ordering.mu.iter().rev().copied().collect(),
            };
            assert_eq!(
                digest_energy(&instance, &ordering),
                digest_energy(&instance, &mirrored)
            );
            assert_eq!(
                ordering.mirror_canonical(),
                mirrored.mirror_canonical(),
                "mirror pair must share a canonical form"
            );
        }
    }

    #[test]
    fn digest_anneal_reaches_ground_state() {
        let model = DigestModel {
            instance: table_instance(),
        };
        let schedule = Schedule {
            beta_initial: 0.05,
            multiplier: 1.4,
            sweeps_per_stage: 60,
            stages: 25,
        };
        let mut stream = RandomStream::new(13);
        let mut reached = false;
        for _ in 0..6 {
            let start = DigestOrdering::random(5, 4, &mut stream);
            let outcome = anneal(&model, start, &schedule, Kernel::Metropolis, &mut stream);
            if outcome.best_energy == 0.0 {
                reached = true;
                break;
            }
        }
        assert!(reached, "no restart reached H = 0");
    }

    #[test]
    fn instance_files_round_trip() {
        let tsp = fig_instance();
        assert_eq!(TspInstance::parse(&tsp.render()).unwrap(), tsp);
        let digest = table_instance();
        assert_eq!(DigestInstance::parse(&digest.render()).unwrap(), digest);
        assert!(matches!(
            TspInstance::parse("2\n0 0\n"),
            Err(AnnealError::BadInstanceFile(_))
        ));
        assert!(matches!(
            DigestInstance::parse("L: 5\na: 5\nb: 5\nc: 4"),
            Err(AnnealError::InconsistentTotals(_))
        ));
    }

    proptest! {
        #[test]
        fn proposals_report_exact_energy_differences(seed in 0u64..5000) {
            let mut stream = RandomStream::new(seed);
            let tsp = TspModel::new(fig_instance());
            let mut order: Vec<usize> = (0..7).collect();
            stream.shuffle(&mut order);
            let tour = TourMatrix::from_order(&order).unwrap();
            let (candidate, dh) = tsp.propose(&tour, &mut stream);
            prop_assert!((dh - (tsp.energy(&candidate) - tsp.energy(&tour))).abs() < 1e-9);

            let digest = DigestModel { instance: table_instance() };
            let ordering = DigestOrdering::random(5, 4, &mut stream);
            let (candidate, dh) = digest.propose(&ordering, &mut stream);
            prop_assert!(digest.is_valid(&candidate));
            prop_assert!((dh - (digest.energy(&candidate) - digest.energy(&ordering))).abs() < 1e-9);

            let queens = QueensModel { k: 6 };
            let board = queens.diagonal_start();
            let (candidate, dh) = queens.propose(&board, &mut stream);
            prop_assert_eq!(candidate.queens().len(), 6);
            prop_assert!((dh - (queens.energy(&candidate) - queens.energy(&board))).abs() < 1e-9);
        }

        #[test]
        fn random_digest_instances_stay_mirror_invariant(seed in 0u64..2000) {
            // Build a consistent instance from a random true map.
            let mut stream = RandomStream::new(seed);
            let total = 60u64;
            let mut a_cuts: Vec<u64> = (0..3).map(|_| 1 + stream.below(total as usize - 1) as u64).collect();
            let mut b_cuts: Vec<u64> = (0..2).map(|_| 1 + stream.below(total as usize - 1) as u64).collect();
            a_cuts.sort_unstable();
            a_cuts.dedup();
            b_cuts.sort_unstable();
            b_cuts.dedup();
            // A shared cut would imply a zero-length c-fragment, which the
            // energy's 1/c_j weight cannot accommodate.
            b_cuts.retain(|cut| !a_cuts.contains(cut));
            let gaps = |cuts: &[u64]| {
                let mut previous = 0;
                let mut out = Vec::new();
                for &cut in cuts {
                    out.push(cut - previous);
                    previous = cut;
                }
                out.push(total - previous);
                out
            };
            let mut all_cuts = a_cuts.clone();
            all_cuts.extend_from_slice(&b_cuts);
            all_cuts.sort_unstable();
            let a = gaps(&a_cuts);
            let b = gaps(&b_cuts);
            let c = gaps(&all_cuts);
            let instance = DigestInstance::new(a.clone(), b.clone(), c, total).unwrap();
            let mut ordering = DigestOrdering::identity(a.len(), b.len());
            stream.shuffle(&mut ordering.sigma);
            stream.shuffle(&mut ordering.mu);
            let mirrored = DigestOrdering {
                sigma: ordering.sigma.iter().rev().copied().collect(),
                mu: ordering.mu.iter().rev().copied().collect(),
            };
            prop_assert_eq!(
                digest_energy(&instance, &ordering),
                digest_energy(&instance, &mirrored)
            );
        }
    }
}
