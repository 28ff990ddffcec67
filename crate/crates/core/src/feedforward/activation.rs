//! Scalar activation functions, their derivatives, and the softmax map.

/// Negative-side slope of [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.1;

/// Activation applied to a layer's local fields.
///
/// `Softmax` is vector-valued and only allowed on a final dense layer.
/// `Step` (Heaviside, 0/1) and `Sign` (plus/minus 1) exist for the exact
/// constructive networks; they are piecewise constant and are rejected by
/// every gradient path. `LeakyRelu` passes a fraction [`LEAKY_SLOPE`] of
/// negative fields through, so a unit driven negative everywhere keeps a
/// gradient and can recover, where a plain rectifier unit is stuck for good.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu,
    Identity,
    Softmax,
    Step,
    Sign,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
            Activation::Step => "step",
            Activation::Sign => "sign",
        }
    }

    /// True when the activation has a derivative usable for training.
    pub fn differentiable(self) -> bool {
        !matches!(self, Activation::Step | Activation::Sign)
    }

    /// Value at local field `b`. Step uses step(0) = 0, sign uses sgn(0) = +1.
    ///
    /// Panics on `Softmax`, which is evaluated per layer via [`softmax`].
    pub fn value(self, b: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-b).exp()),
            Activation::Tanh => b.tanh(),
            Activation::Relu => {
                if b > 0.0 {
                    b
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if b > 0.0 {
                    b
                } else {
                    LEAKY_SLOPE * b
                }
            }
            Activation::Identity => b,
            Activation::Step => {
                if b > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sign => {
                if b >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Activation::Softmax => panic!("softmax is vector-valued; use softmax()"),
        }
    }

    /// Derivative at local field `b`. The rectifier uses g'(0) = 0 and the
    /// leaky rectifier uses the leak slope there.
    ///
    /// Panics on `Softmax`, `Step` and `Sign`; callers check
    /// [`Activation::differentiable`] before entering a gradient path.
    pub fn derivative(self, b: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let v = self.value(b);
                v * (1.0 - v)
            }
            Activation::Tanh => {
                let v = b.tanh();
                1.0 - v * v
            }
            Activation::Relu => {
                if b > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if b > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Identity => 1.0,
            Activation::Softmax | Activation::Step | Activation::Sign => {
                panic!("{} has no scalar derivative", self.name())
            }
        }
    }
}

/// Inverse temperature of the softmax map.
///
/// `Limit` is the hard-winner limit of growing scale: probability one on the
/// largest field (lowest index on ties).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SoftmaxScale {
    Alpha(f64),
    Limit,
}

/// Normalized exponentials O_i = exp(a b_i) / sum_k exp(a b_k).
///
/// The largest field is subtracted before exponentiation, so overflow cannot
/// occur and the components sum to one up to rounding.
///
/// Panics on an empty slice or non-finite fields.
pub fn softmax(fields: &[f64], scale: SoftmaxScale) -> Vec<f64> {
    assert!(!fields.is_empty(), "softmax needs at least one field");
    assert!(
        fields.iter().all(|b| b.is_finite()),
        "softmax fields must be finite"
    );
    let top = fields.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match scale {
        SoftmaxScale::Limit => {
            let winner = fields.iter().position(|&b| b == top).unwrap();
            let mut out = vec![0.0; fields.len()];
            out[winner] = 1.0;
            out
        }
        SoftmaxScale::Alpha(alpha) => {
            assert!(alpha.is_finite(), "softmax scale must be finite");
            let mut out: Vec<f64> = fields.iter().map(|&b| (alpha * (b - top)).exp()).collect();
            let norm: f64 = out.iter().sum();
            for o in &mut out {
                *o /= norm;
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    #[test]
    fn sigmoid_values_and_derivative() {
        let g = Activation::Sigmoid;
        assert_eq!(g.value(0.0), 0.5);
        assert_eq!(g.derivative(0.0), 0.25);
        // The derivative is g(1-g) exactly.
        for &b in &[-3.0, -0.7, 0.2, 5.0] {
            let v = g.value(b);
            assert!((g.derivative(b) - v * (1.0 - v)).abs() < 1e-15);
        }
        // Saturation is well-behaved, no overflow on large negative fields.
        assert_eq!(g.value(-1000.0), 0.0);
        assert_eq!(g.value(1000.0), 1.0);
    }

    #[test]
    fn tanh_derivative_is_one_minus_square() {
        let g = Activation::Tanh;
        for &b in &[-2.0f64, -0.3, 0.0, 1.0, 4.0] {
            let v = b.tanh();
            assert!((g.derivative(b) - (1.0 - v * v)).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_kink_uses_zero_derivative_at_zero() {
        let g = Activation::Relu;
        assert_eq!(g.value(-2.0), 0.0);
        assert_eq!(g.value(3.5), 3.5);
        assert_eq!(g.derivative(0.0), 0.0);
        assert_eq!(g.derivative(1e-12), 1.0);
        assert_eq!(g.derivative(-1e-12), 0.0);
    }

    #[test]
    fn leaky_relu_scales_negative_fields_by_the_leak() {
        let g = Activation::LeakyRelu;
        assert_eq!(g.value(3.5), 3.5);
        assert_eq!(g.value(-2.0), -2.0 * LEAKY_SLOPE);
        assert_eq!(g.value(0.0), 0.0);
        assert_eq!(g.derivative(1e-12), 1.0);
        assert_eq!(g.derivative(-1e-12), LEAKY_SLOPE);
        assert_eq!(g.derivative(0.0), LEAKY_SLOPE);
        assert!(g.differentiable());
    }

    #[test]
    fn step_and_sign_conventions() {
        assert_eq!(Activation::Step.value(0.0), 0.0);
        assert_eq!(Activation::Step.value(1e-15), 1.0);
        assert_eq!(Activation::Sign.value(0.0), 1.0);
        assert_eq!(Activation::Sign.value(-1e-15), -1.0);
        assert!(!Activation::Step.differentiable());
        assert!(!Activation::Sign.differentiable());
        assert!(Activation::Relu.differentiable());
    }

    #[test]
    fn softmax_equal_fields_are_uniform() {
        let out = softmax(&[0.7; 5], SoftmaxScale::Alpha(1.0));
        for o in &out {
            assert!((o - 0.2).abs() < 1e-15);
        }
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_two_fields_match_closed_form() {
        let e = std::f64::consts::E;
        let out = softmax(&[1.0, 0.0], SoftmaxScale::Alpha(1.0));
        assert!((out[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((out[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        // Doubling the scale squares the odds ratio.
        let sharp = softmax(&[1.0, 0.0], SoftmaxScale::Alpha(2.0));
        let e2 = e * e;
        assert!((sharp[0] - e2 / (e2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_limit_is_one_hot_argmax() {
        assert_eq!(softmax(&[0.3, 2.5, -1.0], SoftmaxScale::Limit), vec![0.0, 1.0, 0.0]);
        // Ties go to the lowest index.
        assert_eq!(softmax(&[2.5, 2.5, 1.0], SoftmaxScale::Limit), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_extreme_fields_stay_normalized() {
        let out = softmax(&[1000.0, 0.0, -1000.0], SoftmaxScale::Alpha(1.0));
        assert!(out.iter().all(|o| o.is_finite()));
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_simplex_and_monotonicity_properties() {
        let mut stream = RandomStream::new(0x5f37);
        for _ in 0..200 {
            let n = 2 + stream.below(5);
            let fields: Vec<f64> = (0..n).map(|_| stream.uniform_in(-8.0, 8.0)).collect();
            let out = softmax(&fields, SoftmaxScale::Alpha(1.0));
            let total: f64 = out.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(out.iter().all(|&o| o > 0.0 && o < 1.0 + 1e-12));
            // Raising one field raises its probability.
            let k = stream.below(n);
            let mut bumped = fields.clone();
            bumped[k] += 0.5;
            let out2 = softmax(&bumped, SoftmaxScale::Alpha(1.0));
            assert!(out2[k] > out[k]);
        }
    }

    #[test]
    fn softmax_jacobian_matches_finite_differences() {
        let fields = [0.4, -1.2, 0.9, 0.1];
        let out = softmax(&fields, SoftmaxScale::Alpha(1.0));
        let h = 1e-6;
        for l in 0..fields.len() {
            let mut plus = fields;
            plus[l] += h;
            let mut minus = fields;
            minus[l] -= h;
            let op = softmax(&plus, SoftmaxScale::Alpha(1.0));
            let om = softmax(&minus, SoftmaxScale::Alpha(1.0));
            for i in 0..fields.len() {
                let fd = (op[i] - om[i]) / (2.0 * h);
                let delta = if i == l { 1.0 } else { 0.0 };
                let analytic = out[i] * (delta - out[l]);
                assert!(
                    (fd - analytic).abs() < 1e-8,
                    "jacobian ({i},{l}): fd {fd} vs {analytic}"
                );
            }
        }
    }
}
