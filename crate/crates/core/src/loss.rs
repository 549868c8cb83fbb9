//! Clamped log-likelihood pieces shared by the classifiers and the GAN.
//!
//! Probabilities inside logarithms are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
//! The clamp is flat: outside the open interval the derivative is zero.

pub const PROB_CLAMP: f64 = 1e-9;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `-ln(clamp(p))`.
pub fn neg_log(p: f64) -> f64 {
    -clamp_prob(p).ln()
}

/// `d/dp [-ln(clamp(p))]`, zero where the clamp is active.
pub fn neg_log_grad(p: f64) -> f64 {
    if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
        -1.0 / p
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_bounds() {
        assert_eq!(neg_log(0.0), -(PROB_CLAMP.ln()));
        assert!((neg_log(0.0) - 20.7232658).abs() < 1e-6);
        assert_eq!(neg_log(1.0), -((1.0 - PROB_CLAMP).ln()));
        assert_eq!(neg_log_grad(0.0), 0.0);
        assert_eq!(neg_log_grad(1.0), 0.0);
        assert_eq!(neg_log_grad(0.25), -4.0);
    }
}
