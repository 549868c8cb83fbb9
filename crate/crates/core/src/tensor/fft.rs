//! Unitary discrete Fourier transform plans.
//!
//! The forward transform uses the kernel `ω = exp(+2πi/d)` with symmetric
//! `1/√d` normalization, so `F|j⟩ = d^{-1/2} Σ_k ω^{kj} |k⟩`. The adjoint uses
//! the conjugate kernel. Powers of two go through an iterative radix-2
//! transform; every other length is reduced to a power-of-two circular
//! convolution (Bluestein's chirp-z identity), so all lengths cost
//! `O(d log d)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    /// Kernel `exp(+2πi kj/n)`.
    Positive,
    /// Kernel `exp(-2πi kj/n)`.
    Negative,
}

/// Precomputed twiddles and bit-reversal table for a power-of-two length.
#[derive(Debug)]
struct Radix2 {
    len: usize,
    /// `exp(+2πi k/len)` for `k < len/2`.
    twiddles: Vec<Complex64>,
    bitrev: Vec<u32>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        debug_assert!(len.is_power_of_two());
        let bits = len.trailing_zeros();
        let twiddles = (0..len / 2)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / len as f64))
            .collect();
        let bitrev = (0..len as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        Self { len, twiddles, bitrev }
    }

    /// Unnormalized transform in place.
    fn process(&self, buf: &mut [Complex64], dir: Direction) {
        let n = self.len;
        debug_assert_eq!(buf.len(), n);
        for (i, &r) in self.bitrev.iter().enumerate() {
            let r = r as usize;
            if i < r {
                buf.swap(i, r);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                let (lo, hi) = buf[start..start + 2 * half].split_at_mut(half);
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if dir == Direction::Negative {
                        w = w.conj();
                    }
                    let v = hi[k] * w;
                    let u = lo[k];
                    lo[k] = u + v;
                    hi[k] = u - v;
                }
            }
            half *= 2;
        }
    }
}

/// Chirp-z reduction of an arbitrary-length DFT to a power-of-two convolution.
#[derive(Debug)]
struct Bluestein {
    len: usize,
    /// `exp(+iπ m²/len)` for `m < len`.
    chirp: Vec<Complex64>,
    inner: Radix2,
    /// Radix-2 transform of the conjugate chirp, laid out circularly and
    /// pre-scaled by `1/M` to fold in the inverse transform's normalization.
    kernel_spectrum: Vec<Complex64>,
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let m = (2 * len - 1).next_power_of_two();
        let modulus = 2 * len as u64;
        let chirp: Vec<Complex64> = (0..len as u64)
            .map(|j| {
                let e = (j * j) % modulus;
                Complex64::from_polar(1.0, PI * e as f64 / len as f64)
            })
            .collect();
        let inner = Radix2::new(m);
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for j in 1..len {
            kernel[j] = chirp[j].conj();
            kernel[m - j] = chirp[j].conj();
        }
        inner.process(&mut kernel, Direction::Negative);
        let scale = 1.0 / m as f64;
        for k in kernel.iter_mut() {
            *k *= scale;
        }
        Self {
            len,
            chirp,
            inner,
            kernel_spectrum: kernel,
        }
    }

    /// Unnormalized positive-kernel transform in place:
    /// `X_k = c_k Σ_j (x_j c_j) conj(c_{k-j})` with `c_m = exp(iπ m²/n)`.
    fn process_positive(&self, buf: &mut [Complex64]) {
        let m = self.inner.len;
        let mut work = vec![Complex64::new(0.0, 0.0); m];
        for ((w, &x), &c) in work.iter_mut().zip(buf.iter()).zip(&self.chirp) {
            *w = x * c;
        }
        self.inner.process(&mut work, Direction::Negative);
        for (w, &k) in work.iter_mut().zip(&self.kernel_spectrum) {
            *w *= k;
        }
        self.inner.process(&mut work, Direction::Positive);
        for ((out, &w), &c) in buf.iter_mut().zip(&work).zip(&self.chirp) {
            *out = w * c;
        }
    }

    fn process(&self, buf: &mut [Complex64], dir: Direction) {
        debug_assert_eq!(buf.len(), self.len);
        match dir {
            Direction::Positive => self.process_positive(buf),
            Direction::Negative => {
                // Σ x_j ω^{-kj} = conj(Σ conj(x_j) ω^{kj})
                buf.iter_mut().for_each(|z| *z = z.conj());
                self.process_positive(buf);
                buf.iter_mut().for_each(|z| *z = z.conj());
            }
        }
    }
}

#[derive(Debug)]
enum Kernel {
    Identity,
    Radix2(Radix2),
    Bluestein(Bluestein),
}

/// A reusable unitary DFT of fixed length.
///
/// Plans are immutable after construction and cheap to share through
/// [`Arc`]; see [`DftPlan::shared`].
#[derive(Debug)]
pub struct DftPlan {
    dim: usize,
    scale: f64,
    kernel: Kernel,
}

impl DftPlan {
    /// Builds a plan for length `dim` (`dim >= 1`).
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "DFT length must be positive");
        let kernel = if dim == 1 {
            Kernel::Identity
        } else if dim.is_power_of_two() {
            Kernel::Radix2(Radix2::new(dim))
        } else {
            Kernel::Bluestein(Bluestein::new(dim))
        };
        Self {
            dim,
            scale: 1.0 / (dim as f64).sqrt(),
            kernel,
        }
    }

    pub fn shared(dim: usize) -> Arc<Self> {
        Arc::new(Self::new(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the plan runs a direct radix-2 transform.
    pub fn is_radix2(&self) -> bool {
        matches!(self.kernel, Kernel::Radix2(_))
    }

    fn run(&self, buf: &mut [Complex64], dir: Direction) {
        assert_eq!(buf.len(), self.dim, "buffer length does not match plan");
        match &self.kernel {
            Kernel::Identity => return,
            Kernel::Radix2(r) => r.process(buf, dir),
            Kernel::Bluestein(b) => b.process(buf, dir),
        }
        for z in buf.iter_mut() {
            *z *= self.scale;
        }
    }

    /// Applies `F` in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, Direction::Positive);
    }

    /// Applies `F†` in place.
    pub fn adjoint(&self, buf: &mut [Complex64]) {
        self.run(buf, Direction::Negative);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let e = ((k * j) % n) as f64;
                        v * Complex64::from_polar(1.0, sign * 2.0 * PI * e / n as f64)
                    })
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    fn probe(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|j| Complex64::new((j as f64 * 0.37).sin(), (j as f64 * 1.3 + 0.2).cos()))
            .collect()
    }

    #[test]
    fn small_lengths_match_direct_sum() {
        for n in 1..=40 {
            let x = probe(n);
            for (sign, adj) in [(1.0, false), (-1.0, true)] {
                let mut got = x.clone();
                let plan = DftPlan::new(n);
                if adj {
                    plan.adjoint(&mut got);
                } else {
                    plan.forward(&mut got);
                }
                let want = naive(&x, sign);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).norm() < 1e-12, "n={n} adj={adj}");
                }
            }
        }
    }

    #[test]
    fn bluestein_padding_is_power_of_two() {
        let plan = DftPlan::new(400);
        assert!(!plan.is_radix2());
        match &plan.kernel {
            Kernel::Bluestein(b) => assert_eq!(b.inner.len, 1024),
            _ => unreachable!(),
        }
    }
}
