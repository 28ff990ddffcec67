//! Self-consistent mean-field theory of the stochastic binary memory: the
//! scalar order-parameter equation, the coupled (m1, q, sigma_z) system, its
//! deterministic (beta -> infinity) limit, the storage phase diagram, and the
//! three-pattern mixed-state ansatz.

use crate::numerics::{erf, erfc, HermiteRule};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Converged solution of the coupled mean-field equations.
#[derive(Debug, Clone, Copy)]
pub struct MeanFieldSolution {
    /// Overlap with the retrieved pattern, in [0,1].
    pub m1: f64,
    /// Edwards-Anderson-type parameter, in [0,1].
    pub q: f64,
    /// Cross-talk field spread, sigma_z^2 = alpha q / [1 - beta(1-q)]^2.
    pub sigma_z: f64,
    /// True when all residuals fell below the tolerance.
    pub converged: bool,
    /// Fixed-point iterations performed.
    pub iterations: usize,
}

/// Phase classification at one (alpha, 1/beta) point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retrieval {
    Ordered,
    Disordered,
}

/// A point of the storage phase diagram. `alpha` is the critical capacity at
/// noise level `beta_inv`; below it the retrieval (ordered) phase survives.
#[derive(Debug, Clone, Copy)]
pub struct PhasePoint {
    pub alpha: f64,
    pub beta_inv: f64,
    pub retrieval: Retrieval,
}

/// Residual tolerance for the fixed-point solvers.
const TOLERANCE: f64 = 1e-10;
/// Iteration cap for the damped fixed-point solvers.
const MAX_ITERATIONS: usize = 100_000;
/// Damping factor on fixed-point updates (undamped iteration oscillates
/// near the critical capacity).
const DAMPING: f64 = 0.5;
/// Above this beta * sigma_z the quadrature switches to boundary-layer
/// asymptotics; below it Gauss-Hermite of order 60 resolves the integrands.
/// The crossover sits where the two error curves intersect (~1e-7).
const LAYER_SWITCH: f64 = 4.75;

fn hermite_rule() -> &'static HermiteRule {
    static RULE: OnceLock<HermiteRule> = OnceLock::new();
    RULE.get_or_init(|| HermiteRule::new(60).expect("order 60 is valid"))
}

/// sech^2 without overflow for large arguments.
fn sech2(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// E[tanh(beta (m + Z))] and E[1 - tanh^2(beta (m + Z))] for Z ~ N(0, sigma^2).
///
/// For beta*sigma beyond the switch point the tanh transition is a boundary
/// layer of width 1/beta that fixed-order quadrature cannot resolve, so the
/// integrals are replaced by their matched asymptotics: the sign-function
/// limit plus the leading 1/beta^2 layer corrections
///   E[tanh]  = erf(m / (sigma sqrt(2))) - phi(0) (m/sigma^2) pi^2/(12 beta^2),
///   E[sech^2] = (phi(0)/beta) [2 + (pi^2/12) ((m/sigma^2)^2 - 1/sigma^2) / beta^2],
/// with phi the N(m, sigma^2) density. Relative errors decay like
/// (beta sigma)^-2 and are below 1e-6 at the switch point.
fn layer_averages(m: f64, sigma: f64, beta: f64) -> (f64, f64) {
    if sigma < 1e-14 {
        // Degenerate noise: the field is deterministic.
        let t = (beta * m).tanh();
        return (t, sech2(beta * m));
    }
    if beta * sigma <= LAYER_SWITCH {
        let rule = hermite_rule();
        let var = sigma * sigma;
        let tanh_avg = rule
            .expectation(|z| (beta * (m + z)).tanh(), 0.0, var)
            .expect("positive variance");
        let sech2_avg = rule
            .expectation(|z| sech2(beta * (m + z)), 0.0, var)
            .expect("positive variance");
        (tanh_avg, sech2_avg)
    } else {
        let phi0 = (-0.5 * (m / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
        let tanh_avg = erf(m / (sigma * 2f64.sqrt()))
            - phi0 * (m / (sigma * sigma)) * PI * PI / (12.0 * beta * beta);
        let m_term = (m / (sigma * sigma)).powi(2) - 1.0 / (sigma * sigma);
        let sech2_avg = phi0 / beta * (2.0 + PI * PI / 12.0 * m_term / (beta * beta));
        (tanh_avg, sech2_avg.max(0.0))
    }
}

/// Largest nonnegative solution of m = tanh(beta m).
///
/// Zero for beta <= 1; otherwise found by bisection on [eps, 1] (the
/// residual changes sign there exactly when beta > 1) with a Newton polish.
/// The returned root satisfies |m - tanh(beta m)| < 1e-12.
pub fn solve_m1(beta: f64) -> f64 {
    assert!(beta >= 0.0, "beta must be nonnegative");
    if beta <= 1.0 {
        return 0.0;
    }
    let residual = |m: f64| m - (beta * m).tanh();
    let (mut lo, mut hi) = (1e-12, 1.0);
    // residual(lo) < 0 since tanh(beta m) ~ beta m > m; residual(1) > 0.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let mut m = 0.5 * (lo + hi);
    for _ in 0..4 {
        let t = (beta * m).tanh();
        let f = m - t;
        let fp = 1.0 - beta * (1.0 - t * t);
        if fp.abs() > 1e-12 {
            m -= f / fp;
        }
    }
    m.clamp(0.0, 1.0)
}

/// Solves the coupled system
///   q  = E_z[tanh^2(beta m1 + beta z)],
///   m1 = E_z[tanh(beta m1 + beta z)],    z ~ N(0, sigma_z^2),
///   sigma_z^2 = alpha q / [1 - beta (1 - q)]^2
/// by damped fixed-point iteration from (m1, q) = (1, 1). When no positive
/// m1 solution survives the iteration collapses onto the m1 = 0 branch.
pub fn solve_coupled(alpha: f64, beta: f64) -> MeanFieldSolution {
    assert!(alpha > 0.0 && beta > 0.0, "alpha and beta must be positive");
    let mut m1 = 1.0f64;
    let mut q = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut sigma = sigma_z(alpha, beta, q);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        sigma = sigma_z(alpha, beta, q);
        let (tanh_avg, sech2_avg) = layer_averages(m1, sigma, beta);
        let q_target = 1.0 - sech2_avg;
        let m_target = tanh_avg;
        let residual = (m1 - m_target).abs().max((q - q_target).abs());
        if residual < TOLERANCE {
            converged = true;
            break;
        }
        m1 = DAMPING * m1 + (1.0 - DAMPING) * m_target;
        q = DAMPING * q + (1.0 - DAMPING) * q_target;
        m1 = m1.clamp(0.0, 1.0);
        q = q.clamp(0.0, 1.0);
    }
    // Snap the disordered branch: tiny residual overlaps are numerical.
    if m1 < 1e-8 {
        m1 = 0.0;
    }
    MeanFieldSolution {
        m1,
        q,
        sigma_z: sigma,
        converged,
        iterations,
    }
}

fn sigma_z(alpha: f64, beta: f64, q: f64) -> f64 {
    let denom = 1.0 - beta * (1.0 - q);
    // The squared form keeps sigma positive through transient denominator
    // sign changes; guard only against exact zero.
    (alpha * q).sqrt() / denom.abs().max(1e-300)
}

/// Deterministic (beta -> infinity) steady state. Solves the one-dimensional
/// equation y (sqrt(2 alpha) + (2/sqrt(pi)) e^{-y^2}) = erf(y) for its
/// largest root by scan and bisection, then returns
/// m1 = erf(y) and P_error = (1 - erf(y))/2. Above the critical capacity no
/// positive root exists and the result is (0, 1/2).
pub fn solve_deterministic(alpha: f64) -> (f64, f64) {
    assert!(alpha > 0.0, "alpha must be positive");
    match largest_y_root(alpha) {
        // erfc keeps P resolvable when erf(y) saturates to 1.
        Some(y) => (erf(y), 0.5 * erfc(y)),
        None => (0.0, 0.5),
    }
}

fn y_residual(y: f64, alpha: f64) -> f64 {
    y * ((2.0 * alpha).sqrt() + 2.0 / PI.sqrt() * (-y * y).exp()) - erf(y)
}

/// Location y2 > 1 of the residual's single local minimum, if it has one.
///
/// The residual's derivative is sqrt(2 alpha) - (4/sqrt(pi)) y^2 e^{-y^2},
/// so the shape is fully determined by h(y) = y^2 e^{-y^2}, which rises to
/// e^{-1} at y = 1 and decays. For sqrt(2 alpha) sqrt(pi)/4 >= e^{-1} the
/// residual is monotone increasing (no positive root can exist); otherwise
/// it dips exactly once, on the decaying side of h.
fn y_minimum(alpha: f64) -> Option<f64> {
    let r = (2.0 * alpha).sqrt() * PI.sqrt() / 4.0;
    if r >= (-1.0f64).exp() {
        return None;
    }
    let h = |y: f64| y * y * (-y * y).exp();
    let mut lo = 1.0;
    let mut hi = 2.0;
    while h(hi) > r {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Largest positive root of the y-equation, if any. The root exists exactly
/// when the residual dips below zero at its single minimum y2, and then lies
/// on the monotone rise between y2 and 1/sqrt(2 alpha) + 1 (beyond which the
/// linear term alone exceeds erf <= 1), so bisection is exact with no grid
/// resolution limit even where the two roots merge at the critical capacity.
fn largest_y_root(alpha: f64) -> Option<f64> {
    let y2 = y_minimum(alpha)?;
    if y_residual(y2, alpha) > 0.0 {
        return None;
    }
    let mut lo = y2;
    let mut hi = 1.0 / (2.0 * alpha).sqrt() + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if y_residual(mid, alpha) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Critical storage capacity of the deterministic limit: bisection on alpha
/// for the disappearance of the positive-m1 root of the y-equation. The
/// indicator (residual at its minimum, strictly increasing in alpha) makes
/// the bisection exact. The bracket [0.10, 0.20] straddles the transition.
pub fn critical_capacity() -> f64 {
    let root_survives = |alpha: f64| match y_minimum(alpha) {
        Some(y2) => y_residual(y2, alpha) <= 0.0,
        None => false,
    };
    let (mut lo, mut hi) = (0.10, 0.20);
    debug_assert!(root_survives(lo) && !root_survives(hi));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if root_survives(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Retrieval threshold on m1: overlaps above this count as the ordered
/// (retrieval) phase when scanning the boundary.
const ORDER_THRESHOLD: f64 = 1e-3;

/// Classifies one (alpha, 1/beta) point of the phase diagram.
pub fn classify_phase(alpha: f64, beta_inv: f64) -> PhasePoint {
    assert!(beta_inv > 0.0 && beta_inv <= 1.0, "beta_inv must be in (0,1]");
    let solution = solve_coupled(alpha, 1.0 / beta_inv);
    PhasePoint {
        alpha,
        beta_inv,
        retrieval: if solution.m1 > ORDER_THRESHOLD {
            Retrieval::Ordered
        } else {
            Retrieval::Disordered
        },
    }
}

/// For each noise level 1/beta in the grid, finds the critical capacity
/// where solve_coupled loses the m1 > 0 branch (bisection on alpha). The
/// returned points carry retrieval = Ordered, marking the phase that exists
/// below each boundary value.
pub fn phase_boundary_scan(beta_inv_grid: &[f64]) -> Vec<PhasePoint> {
    beta_inv_grid
        .iter()
        .map(|&beta_inv| {
            assert!(
                beta_inv > 0.0 && beta_inv <= 1.0,
                "beta_inv must be in (0,1]"
            );
            let beta = 1.0 / beta_inv;
            let ordered_at = |alpha: f64| solve_coupled(alpha, beta).m1 > ORDER_THRESHOLD;
            let alpha = if !ordered_at(1e-4) {
                // No retrieval even at vanishing load (beta <= 1).
                0.0
            } else {
                let (mut lo, mut hi) = (1e-4, 0.20);
                debug_assert!(!ordered_at(hi));
                for _ in 0..30 {
                    let mid = 0.5 * (lo + hi);
                    if ordered_at(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            PhasePoint {
                alpha,
                beta_inv,
                retrieval: Retrieval::Ordered,
            }
        })
        .collect()
}

/// Nonzero root of the symmetric three-pattern mixed-state ansatz
/// m_mu = (m, m, m): m = <xi_1 tanh(beta m (xi_1 + xi_2 + xi_3))> with the
/// average over the 8 sign combinations. Returns None when only m = 0
/// solves it (beta <= 1, where the slope at the origin drops below 1).
pub fn mixed_state_root(beta: f64) -> Option<f64> {
    assert!(beta > 0.0, "beta must be positive");
    let rhs = |m: f64| {
        let mut acc = 0.0;
        for bits in 0..8u32 {
            let xi1 = if bits & 1 == 0 { 1.0 } else { -1.0 };
            let xi2 = if bits & 2 == 0 { 1.0 } else { -1.0 };
            let xi3 = if bits & 4 == 0 { 1.0 } else { -1.0 };
            acc += xi1 * (beta * m * (xi1 + xi2 + xi3)).tanh();
        }
        acc / 8.0
    };
    let residual = |m: f64| m - rhs(m);
    // Largest root in (0, 1]: scan downward for the first sign change.
    const GRID: usize = 4000;
    let mut prev_m = 1.0;
    let mut prev_r = residual(1.0);
    for k in (1..GRID).rev() {
        let m = k as f64 / GRID as f64;
        let r = residual(m);
        if r * prev_r <= 0.0 && r != prev_r {
            let (mut lo, mut hi) = (m, prev_m);
            let mut r_lo = r;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let r_mid = residual(mid);
                if r_mid * r_lo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    r_lo = r_mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev_m = m;
        prev_r = r;
    }
    None
}
