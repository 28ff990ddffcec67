//! Central finite-difference gradients, the independent oracle against which
//! every analytic gradient in this crate is checked.

/// Gradient of `f` at `params` by central differences with step `h`:
/// g_i = (f(p + h e_i) - f(p - h e_i)) / (2h).
pub fn finite_diff_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    h: f64,
) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut point = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let original = point[i];
        point[i] = original + h;
        let plus = f(&point);
        point[i] = original - h;
        let minus = f(&point);
        point[i] = original;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_gradient(|p| p[0] * p[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_gives_zero() {
        let g = finite_diff_gradient(|_| 42.0, &[1.0, -2.0, 0.5], 1e-6);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bilinear_cross_terms() {
        let g = finite_diff_gradient(|p| p[0] * p[1], &[2.0, 5.0], 1e-5);
        assert!((g[0] - 5.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }
}
