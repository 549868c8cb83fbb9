//! Adam and parameter initialization.

use rand::Rng;

use crate::error::{InnError, Result};
use crate::model::{Network, NetworkArch};
use crate::rng;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, betas: (f64, f64)) -> Self {
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: ADAM_EPS,
        }
    }
}

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const STATE_MAGIC: &[u8; 8] = b"INNADAM1";

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One Adam update of `params` in place.
    ///
    /// A non-finite gradient entry leaves both `params` and the state
    /// untouched and is reported as [`InnError::NonFiniteGradient`].
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(InnError::DimensionMismatch {
                expected: self.m.len(),
                found: params.len(),
            });
        }
        if grads.len() != self.m.len() {
            return Err(InnError::DimensionMismatch {
                expected: self.m.len(),
                found: grads.len(),
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(InnError::NonFiniteGradient { index });
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    /// Serializes the full state; [`AdamState::from_bytes`] restores it
    /// bit-exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * 6 + 16 * self.m.len());
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&(self.m.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for x in [self.config.lr, self.config.beta1, self.config.beta2, self.config.eps] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in self.m.iter().chain(&self.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| InnError::BadCheckpoint(format!("optimizer state: {why}"));
        if bytes.len() < 8 + 16 + 32 || &bytes[..8] != STATE_MAGIC {
            return Err(bad("missing header"));
        }
        let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().unwrap() };
        let len = u64::from_le_bytes(word(8)) as usize;
        let t = u64::from_le_bytes(word(16));
        let f = |i: usize| f64::from_le_bytes(word(i));
        let config = AdamConfig {
            lr: f(24),
            beta1: f(32),
            beta2: f(40),
            eps: f(48),
        };
        let body = 56;
        let needed = body + 16 * len;
        if bytes.len() != needed {
            return Err(bad("length does not match header"));
        }
        let read = |start: usize| (0..len).map(|i| f(start + 8 * i)).collect::<Vec<_>>();
        Ok(Self {
            config,
            m: read(body),
            v: read(body + 8 * len),
            t,
        })
    }
}

/// Phase initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Uniform on `[-a, a]`, `a = √(6/(d_in + d_out))` per block.
    #[default]
    Xavier,
    /// Uniform on `[-π, π]`.
    UniformPi,
}

impl InitScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "xavier" => Ok(Self::Xavier),
            "uniform-pi" | "uniform_pi" => Ok(Self::UniformPi),
            other => Err(InnError::Config(format!(
                "unknown init scheme {other:?} (expected xavier or uniform-pi)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Xavier => "xavier",
            Self::UniformPi => "uniform-pi",
        }
    }
}

/// Xavier bound for a block mapping `d_in → d_out`.
pub fn xavier_bound(d_in: usize, d_out: usize) -> f64 {
    (6.0 / (d_in + d_out) as f64).sqrt()
}

/// Initializes every phase i.i.d. uniform, drawn in
/// (block, sequence, layer, path) order from `rng`.
pub fn init_network<R: Rng + ?Sized>(arch: &NetworkArch, scheme: InitScheme, rng: &mut R) -> Network {
    let mut net = Network::zeros(arch.clone());
    for (m, block) in net.blocks_mut().iter_mut().enumerate() {
        let bound = match scheme {
            InitScheme::Xavier => xavier_bound(arch.dims()[m], arch.dims()[m + 1]),
            InitScheme::UniformPi => std::f64::consts::PI,
        };
        for seq in block.sequences_mut() {
            for p in seq.phases_mut() {
                *p = rng.random_range(-bound..=bound);
            }
        }
    }
    net
}

/// Xavier initialization from the `"init"` stream of `seed`.
pub fn xavier_init(arch: &NetworkArch, seed: u64) -> Network {
    init_network(arch, InitScheme::Xavier, &mut rng::stream(seed, "init"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new(3, AdamConfig::new(0.1, (0.9, 0.999)));
        let mut p = vec![0.5, -1.0, 2.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(4, AdamConfig::new(0.01, (0.5, 0.9)));
        let mut p = vec![0.0; 4];
        let g = [3.0, -1e-3, 250.0, -7.0];
        s.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -0.01 * gi.signum();
            assert!((pi - expected).abs() < 1e-7, "{pi} vs {expected}");
        }
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        // g = 1 both steps, lr 0.1, betas (0.5, 0.9):
        // t=1: m=0.5, v=0.1, m̂=1, v̂=1 → Δ = -0.1/(1+ε)
        // t=2: m=0.75, v=0.19, m̂=1, v̂=1 → Δ = -0.1/(1+ε)
        let mut s = AdamState::new(2, AdamConfig::new(0.1, (0.5, 0.9)));
        let mut p = vec![0.0, 1.0];
        s.step(&mut p, &[1.0, 1.0]).unwrap();
        s.step(&mut p, &[1.0, 1.0]).unwrap();
        let step = 0.1 / (1.0 + ADAM_EPS);
        assert!((p[0] + 2.0 * step).abs() < 1e-15);
        assert!((p[1] - (1.0 - 2.0 * step)).abs() < 1e-15);
        assert!((s.first_moment()[0] - 0.75).abs() < 1e-15);
        assert!((s.second_moment()[0] - 0.19).abs() < 1e-15);
        assert_eq!(s.steps(), 2);
    }

    #[test]
    fn lr_scale_equivariance_on_first_step() {
        let g = [0.3, -2.0, 1e-4];
        let mut a = AdamState::new(3, AdamConfig::new(0.01, (0.5, 0.9)));
        let mut b = AdamState::new(3, AdamConfig::new(0.02, (0.5, 0.9)));
        let mut pa = vec![0.0; 3];
        let mut pb = vec![0.0; 3];
        a.step(&mut pa, &g).unwrap();
        b.step(&mut pb, &g).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut s = AdamState::new(2, AdamConfig::new(0.1, (0.5, 0.9)));
        let mut p = vec![1.0, 2.0];
        let before = s.clone();
        let err = s.step(&mut p, &[0.1, f64::NAN]).unwrap_err();
        assert!(matches!(err, InnError::NonFiniteGradient { index: 1 }));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s, before);
        assert!(s.step(&mut p, &[0.1]).is_err());
    }

    #[test]
    fn state_round_trips_bit_exactly() {
        let mut s = AdamState::new(5, AdamConfig::new(0.05, (0.5, 0.9)));
        let mut p = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        for k in 0..3 {
            let g: Vec<f64> = (0..5).map(|i| ((i + k) as f64 * 0.7).sin()).collect();
            s.step(&mut p, &g).unwrap();
        }
        let restored = AdamState::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(restored, s);
        assert!(AdamState::from_bytes(&s.to_bytes()[..40]).is_err());
    }

    #[test]
    fn xavier_bounds_and_reproducibility() {
        let arch = NetworkArch::new(vec![16, 8, 4], vec![2, 3]).unwrap();
        let a = xavier_init(&arch, 11);
        let b = xavier_init(&arch, 11);
        assert_eq!(a.flat_params(), b.flat_params());
        assert_ne!(a.flat_params(), xavier_init(&arch, 12).flat_params());
        for (m, block) in a.blocks().iter().enumerate() {
            let bound = xavier_bound(arch.dims()[m], arch.dims()[m + 1]);
            for seq in block.sequences() {
                assert!(seq.phases().iter().all(|p| p.abs() <= bound));
            }
        }
    }

    #[test]
    fn xavier_variance_matches_uniform() {
        // 1000 outputs × 1 layer × 100 paths = 10⁵ draws from one block.
        let arch = NetworkArch::new(vec![100, 1000], vec![1]).unwrap();
        let net = xavier_init(&arch, 3);
        let flat = net.flat_params();
        assert_eq!(flat.len(), 100_000);
        let a = xavier_bound(100, 1000);
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        let var = flat.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / flat.len() as f64;
        let expected = a * a / 3.0;
        assert!((var - expected).abs() / expected < 0.05, "{var} vs {expected}");
    }
}
