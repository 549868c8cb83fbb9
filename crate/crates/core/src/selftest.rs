//! Invariant checks run by `inn selftest`: unitarity, DFT against a direct
//! sum, the controlled-phase identity, the 2D transform against a direct
//! double sum, and a finite-difference gradient check.

use std::f64::consts::PI;

use rand::Rng;

use crate::autodiff::{backward, forward_with_cache, grad_check, grad_check_network, WeightedReadout, GRAD_CHECK_STEP};
use crate::classify::{sample_loss, Head};
use crate::error::Result;
use crate::igan::{gradcheck_composite, sample_noise};
use crate::model::{InputEncoding, NetworkArch};
use crate::optim::{init_network, InitScheme};
use crate::rng;
use crate::tensor::{cp_product, dft2_apply, dft_adjoint_apply, dft_apply, phase_apply, PhaseVector, StateVector, C64};

pub const UNITARITY_TOL: f64 = 1e-12;
pub const DFT_TOL: f64 = 1e-10;
pub const CP_TOL: f64 = 1e-12;
pub const DFT2_TOL: f64 = 1e-10;
pub const GRADCHECK_TOL: f64 = 1e-6;
pub const LAYER_SUM_TOL: f64 = 1e-9;

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<40} error={:.3e} tol={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.error,
            self.tolerance
        )
    }
}

fn random_state<R: Rng>(d: usize, r: &mut R) -> StateVector {
    let amps: Vec<C64> = (0..d)
        .map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    let n = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|z| z / n).collect()).expect("finite")
}

/// `d^{-1/2} Σ_j ω^{kj} x_j` evaluated term by term.
pub fn naive_dft(x: &[C64]) -> Vec<C64> {
    let d = x.len();
    let s = 1.0 / (d as f64).sqrt();
    (0..d)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| v * C64::from_polar(1.0, 2.0 * PI * ((k * j) % d) as f64 / d as f64))
                .sum::<C64>()
                * s
        })
        .collect()
}

/// `(HW)^{-1/2} Σ_{j,j'} ω_H^{kj} ω_W^{k'j'} x_{jj'}` evaluated term by term.
pub fn naive_dft2(x: &[C64], h: usize, w: usize) -> Vec<C64> {
    let s = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![C64::new(0.0, 0.0); h * w];
    for k in 0..h {
        for kp in 0..w {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..h {
                for jp in 0..w {
                    let angle = 2.0 * PI * (((k * j) % h) as f64 / h as f64 + ((kp * jp) % w) as f64 / w as f64);
                    acc += x[j * w + jp] * C64::from_polar(1.0, angle);
                }
            }
            out[k * w + kp] = acc * s;
        }
    }
    out
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn check_unitarity(dims: &[usize], seed: u64) -> Check {
    let mut r = rng::stream(seed, "selftest.unitarity");
    let mut worst: f64 = 0.0;
    for &d in dims {
        let psi = random_state(d, &mut r);
        let fwd = dft_apply(&psi);
        let back = dft_adjoint_apply(&fwd);
        worst = worst.max((fwd.norm() - 1.0).abs());
        worst = worst.max(max_diff(back.amplitudes(), psi.amplitudes()));
        let phi = PhaseVector::new((0..d).map(|_| r.random_range(-PI..PI)).collect()).expect("finite");
        let shifted = phase_apply(&psi, &phi).expect("same dim");
        worst = worst.max((shifted.norm() - 1.0).abs());
    }
    Check {
        name: format!("unitarity d={dims:?}"),
        error: worst,
        tolerance: UNITARITY_TOL,
    }
}

pub fn check_dft(dims: &[usize], seed: u64) -> Check {
    let mut r = rng::stream(seed, "selftest.dft");
    let mut worst: f64 = 0.0;
    for &d in dims {
        let psi = random_state(d, &mut r);
        worst = worst.max(max_diff(dft_apply(&psi).amplitudes(), &naive_dft(psi.amplitudes())));
    }
    Check {
        name: format!("dft vs direct sum d={dims:?}"),
        error: worst,
        tolerance: DFT_TOL,
    }
}

pub fn check_cp(d: usize, seed: u64) -> Result<Check> {
    let mut r = rng::stream(seed, "selftest.cp");
    let phi = PhaseVector::new((0..d).map(|_| r.random_range(-PI..PI)).collect())?;
    let m = cp_product(&phi)?;
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let col = phase_apply(&StateVector::basis(d, j), &phi)?;
        for i in 0..d {
            worst = worst.max((m[(i, j)] - col.amplitudes()[i]).norm());
        }
    }
    Ok(Check {
        name: format!("controlled-phase product d={d}"),
        error: worst,
        tolerance: CP_TOL,
    })
}

pub fn check_dft2(shapes: &[(usize, usize)], seed: u64) -> Result<Check> {
    let mut r = rng::stream(seed, "selftest.dft2");
    let mut worst: f64 = 0.0;
    for &(h, w) in shapes {
        let psi = random_state(h * w, &mut r);
        let got = dft2_apply(&psi, h, w)?;
        worst = worst.max(max_diff(got.amplitudes(), &naive_dft2(psi.amplitudes(), h, w)));
    }
    Ok(Check {
        name: format!("2d transform vs double sum {shapes:?}"),
        error: worst,
        tolerance: DFT2_TOL,
    })
}

/// Readout gradient of one sequence, `d = 16`, `L = 3`.
pub fn check_gradient(seed: u64) -> Result<Check> {
    let arch = NetworkArch::new(vec![16, 1], vec![3])?;
    let net = init_network(&arch, InitScheme::UniformPi, &mut rng::stream(seed, "selftest.grad"));
    let mut r = rng::stream(seed, "selftest.grad.x");
    let x: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
    let err = grad_check_network(&net, &x, &WeightedReadout(vec![1.0]), GRAD_CHECK_STEP)?;
    Ok(Check {
        name: "gradient check d=16 L=3 readout".into(),
        error: err,
        tolerance: GRADCHECK_TOL,
    })
}

/// Softmax + cross-entropy gradient of a `d = (16, 8, 4)`, `L = (2, 2)`
/// classifier.
pub fn check_classifier_gradient(seed: u64) -> Result<Check> {
    let arch = NetworkArch::new(vec![16, 8, 4], vec![2, 2])?;
    let net = init_network(&arch, InitScheme::UniformPi, &mut rng::stream(seed, "selftest.cls"));
    let mut r = rng::stream(seed, "selftest.cls.x");
    let x: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
    let label = 2;
    let (out, cache) = forward_with_cache(&net, &x)?;
    let adj = sample_loss(Head::Softmax, &out, label).1;
    let analytic = backward(&net, &cache, &adj)?.flatten();
    let mut probe = net.clone();
    let err = grad_check(
        |theta| {
            probe.set_flat_params(theta).expect("same shape");
            let out = probe.forward(&x, InputEncoding::Strict).expect("valid input");
            sample_loss(Head::Softmax, &out, label).0
        },
        &net.flat_params(),
        &analytic,
        GRAD_CHECK_STEP,
    )?;
    Ok(Check {
        name: "gradient check classifier (16,8,4) softmax+ce".into(),
        error: err,
        tolerance: GRADCHECK_TOL,
    })
}

/// `z → G → tanh → encode → D` with `d_G = (4, 8)`, `d_D = (8, 1)`.
pub fn check_gan_gradient(seed: u64) -> Result<Check> {
    let g = init_network(
        &NetworkArch::new(vec![4, 8], vec![2])?,
        InitScheme::UniformPi,
        &mut rng::stream(seed, "selftest.gan.G"),
    );
    let d = init_network(
        &NetworkArch::new(vec![8, 1], vec![2])?,
        InitScheme::UniformPi,
        &mut rng::stream(seed, "selftest.gan.D"),
    );
    let z = sample_noise(1, 4, &mut rng::stream(seed, "selftest.gan.z")).remove(0);
    Ok(Check {
        name: "gradient check gan composite G(4,8) D(8,1)".into(),
        error: gradcheck_composite(&g, &d, &z, GRAD_CHECK_STEP)?,
        tolerance: GRADCHECK_TOL,
    })
}

/// A global phase on one layer leaves every readout unchanged, so each
/// layer's gradient must sum to zero.
pub fn check_layer_phase_sums(seed: u64) -> Result<Check> {
    let arch = NetworkArch::new(vec![16, 8, 4], vec![2, 3])?;
    let net = init_network(&arch, InitScheme::UniformPi, &mut rng::stream(seed, "selftest.sum"));
    let mut r = rng::stream(seed, "selftest.sum.x");
    let x: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
    let (out, cache) = forward_with_cache(&net, &x)?;
    let grads = backward(&net, &cache, &sample_loss(Head::Softmax, &out, 1).1)?;
    let mut worst: f64 = 0.0;
    for (m, block) in net.blocks().iter().enumerate() {
        for t in 0..block.d_out() {
            for layer in grads.sequence(m, t).chunks(block.d_in()) {
                worst = worst.max(layer.iter().sum::<f64>().abs());
            }
        }
    }
    Ok(Check {
        name: "per-layer global phase gradient sum".into(),
        error: worst,
        tolerance: LAYER_SUM_TOL,
    })
}

/// The gradient checks run by `inn gradcheck`.
pub fn gradient_suite(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        check_gradient(seed)?,
        check_classifier_gradient(seed)?,
        check_gan_gradient(seed)?,
        check_layer_phase_sums(seed)?,
    ])
}

/// The whole suite in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        check_unitarity(&[2, 3, 16, 400, 1024], seed),
        check_dft(&[2, 3, 7, 16, 100, 400, 1024], seed),
        check_cp(8, seed)?,
        check_dft2(&[(4, 4), (8, 8)], seed)?,
        check_gradient(seed)?,
        check_layer_phase_sums(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in run_all(0).unwrap().into_iter().chain(gradient_suite(0).unwrap()) {
            assert!(c.passed(), "{}", c.line());
        }
    }

    #[test]
    fn naive_dft_of_basis_is_flat() {
        let mut e = vec![C64::new(0.0, 0.0); 5];
        e[0] = C64::new(1.0, 0.0);
        for z in naive_dft(&e) {
            assert!((z - C64::new(1.0 / 5f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }
}
