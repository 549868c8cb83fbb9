//! Elementwise output heads.

/// Contrast factor of the display-only generator head.
pub const GENERATOR_CONTRAST: f64 = 3.0;

/// `softmax(p)_t = e^{p_t} / Σ_s e^{p_s}`, shifted by `max p` for stability.
pub fn softmax(p: &[f64]) -> Vec<f64> {
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = p.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `tanh(k (2p - 1))` componentwise.
pub fn tanh_head(p: &[f64], k: f64) -> Vec<f64> {
    p.iter().map(|&v| (k * (2.0 * v - 1.0)).tanh()).collect()
}

/// Maps generator probabilities to pixels in `[-1, 1]` via `tanh(2p - 1)`.
pub fn generator_head(p: &[f64]) -> Vec<f64> {
    tanh_head(p, 1.0)
}

/// Display variant `tanh(3(2p - 1))`; never used during training.
pub fn generator_head_contrast(p: &[f64]) -> Vec<f64> {
    tanh_head(p, GENERATOR_CONTRAST)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.3; 4]), vec![0.25; 4]);
        let s = softmax(&[1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((s[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((s[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s[0] - 0.7311).abs() < 1e-4);
        let s = softmax(&[0.9, 0.1, 0.55, 0.0, 1.0, 0.33]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generator_head_examples() {
        assert_eq!(generator_head(&[0.5]), vec![0.0]);
        assert!((generator_head(&[1.0])[0] - 0.76159).abs() < 1e-5);
        assert!((generator_head_contrast(&[1.0])[0] - 0.99505).abs() < 1e-5);
        assert!((generator_head(&[0.0])[0] + 1f64.tanh()).abs() < 1e-15);
    }
}
