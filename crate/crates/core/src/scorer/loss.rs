//! Bradley–Terry pairwise loss and the parallel-pair regulariser.

/// `log σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of the Bradley–Terry prediction `σ(s_b - s_a)` against
/// the target `p_b_over_a`.
pub fn pairwise_loss(s_a: f64, s_b: f64, p_b_over_a: f64) -> f64 {
    -p_b_over_a * log_sigmoid(s_b - s_a) - (1.0 - p_b_over_a) * log_sigmoid(s_a - s_b)
}

/// `∂ pairwise_loss / ∂ s_b`; the derivative in `s_a` is its negation.
pub fn pairwise_grad_b(s_a: f64, s_b: f64, p_b_over_a: f64) -> f64 {
    sigmoid(s_b - s_a) - p_b_over_a
}

/// Symmetric penalty on the score gap of two translations; minimum `2 ln 2` at equality.
pub fn parallel_loss(s_a: f64, s_b: f64) -> f64 {
    -log_sigmoid(s_a - s_b) - log_sigmoid(s_b - s_a)
}

/// `∂ parallel_loss / ∂ s_b`; the derivative in `s_a` is its negation.
pub fn parallel_grad_b(s_a: f64, s_b: f64) -> f64 {
    sigmoid(s_b - s_a) - sigmoid(s_a - s_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn closed_forms() {
        for p in [0.0, 0.25, 0.5, 1.0] {
            assert!((pairwise_loss(1.3, 1.3, p) - LN_2).abs() < 1e-12);
        }
        // -log σ(10) = log(1 + e^-10)
        assert!((pairwise_loss(0.0, 10.0, 1.0) - 4.539889921686465e-5).abs() < 1e-15);
        // 0.25·log(1+e²) + 0.75·log(1+e⁻²)
        assert!((pairwise_loss(2.0, 0.0, 0.25) - 0.6269280110429725).abs() < 1e-12);
        assert!((parallel_loss(0.7, 0.7) - 2.0 * LN_2).abs() < 1e-12);
        assert_eq!(parallel_loss(3.0, 0.0), parallel_loss(0.0, 3.0));
        assert!((parallel_loss(1.0, 0.0) - 1.6265233750364457).abs() < 1e-12);
    }

    #[test]
    fn stable_at_extremes() {
        for d in [-500.0, -50.0, 50.0, 500.0] {
            let l = pairwise_loss(0.0, d, 0.3);
            assert!(l.is_finite() && l > 0.0);
            assert!(parallel_loss(0.0, d).is_finite());
            assert!(log_sigmoid(d).is_finite());
        }
        assert!((pairwise_loss(0.0, 500.0, 0.0) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn gradients_at_equal_scores() {
        assert_eq!(pairwise_grad_b(0.4, 0.4, 0.75), -0.25);
        assert_eq!(parallel_grad_b(0.4, 0.4), 0.0);
    }
}
