//! Complex state-vector primitives: encodings, the beamsplitter `F`, the
//! phase shifter `U(φ)`, readout, and the two-dimensional tensor-product
//! variants.
//!
//! All operations are pure functions. Hot loops elsewhere in the crate use
//! the in-place slice forms ([`DftPlan::forward`], [`apply_phases_in_place`])
//! to avoid reallocating states.

mod fft;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use fft::DftPlan;

use crate::error::{InnError, Result};

/// Norms at or below this value are treated as zero.
pub const EPS_NORM: f64 = 1e-12;

/// Largest register for which [`cp_product`] builds dense matrices.
pub const CP_PRODUCT_MAX_DIM: usize = 64;

pub type C64 = Complex64;

/// Complex amplitudes of one `d`-path interferometer register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    /// Wraps raw amplitudes. No normalization is applied.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(InnError::InvalidDimension("state vector must be non-empty".into()));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(InnError::NonFinite("state amplitudes"));
        }
        Ok(Self { amps })
    }

    /// The computational basis state `|j⟩` of a `dim`-path register.
    pub fn basis(dim: usize, j: usize) -> Self {
        assert!(j < dim, "basis index {j} out of range for dimension {dim}");
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[j] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Born-rule probabilities `|ψ_j|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Real phases `φ_j` of a phase shifter. Values are never wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    phases: Vec<f64>,
}

impl PhaseVector {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(InnError::NonFinite("phase vector"));
        }
        Ok(Self { phases })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { phases: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phases
    }
}

fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Amplitude encoding `|x⟩ = x / ‖x‖`.
///
/// ```
/// let psi = inn::tensor::amplitude_encode(&[3.0, 4.0]).unwrap();
/// assert!((psi.amplitudes()[0].re - 0.6).abs() < 1e-15);
/// assert!((psi.amplitudes()[1].re - 0.8).abs() < 1e-15);
/// ```
pub fn amplitude_encode(x: &[f64]) -> Result<StateVector> {
    if x.is_empty() {
        return Err(InnError::InvalidDimension("cannot encode an empty vector".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(InnError::NonFinite("encoding input"));
    }
    let norm = euclidean_norm(x);
    if norm <= EPS_NORM {
        return Err(InnError::ZeroNormInput { norm });
    }
    Ok(StateVector {
        amps: x.iter().map(|&v| C64::new(v / norm, 0.0)).collect(),
    })
}

/// Amplitude encoding with the norm clamped from below at [`EPS_NORM`].
///
/// Used between blocks and for generator noise, where a transient
/// zero vector must not abort training. Returns the encoded state and the
/// norm actually divided by.
pub fn amplitude_encode_clamped(x: &[f64]) -> (StateVector, f64) {
    let norm = euclidean_norm(x).max(EPS_NORM);
    let amps = x.iter().map(|&v| C64::new(v / norm, 0.0)).collect();
    (StateVector { amps }, norm)
}

/// Phase encoding `U(x) F |0⟩`, i.e. `ψ_j = exp(i x_j)/√d`.
pub fn phase_encode(x: &[f64]) -> Result<StateVector> {
    if x.is_empty() {
        return Err(InnError::InvalidDimension("cannot encode an empty vector".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(InnError::NonFinite("encoding input"));
    }
    let r = 1.0 / (x.len() as f64).sqrt();
    Ok(StateVector {
        amps: x.iter().map(|&v| C64::from_polar(r, v)).collect(),
    })
}

/// Applies the beamsplitter `F` (unitary DFT, kernel `exp(+2πi kj/d)`).
pub fn dft_apply(psi: &StateVector) -> StateVector {
    let mut out = psi.clone();
    DftPlan::new(psi.dim()).forward(&mut out.amps);
    out
}

/// Applies `F†`.
pub fn dft_adjoint_apply(psi: &StateVector) -> StateVector {
    let mut out = psi.clone();
    DftPlan::new(psi.dim()).adjoint(&mut out.amps);
    out
}

/// Multiplies `amps[j]` by `exp(i φ_j)` in place.
pub fn apply_phases_in_place(amps: &mut [C64], phases: &[f64]) {
    debug_assert_eq!(amps.len(), phases.len());
    for (z, &p) in amps.iter_mut().zip(phases) {
        *z *= C64::from_polar(1.0, p);
    }
}

/// Multiplies `amps[j]` by `exp(-i φ_j)` in place.
pub fn apply_phases_adjoint_in_place(amps: &mut [C64], phases: &[f64]) {
    debug_assert_eq!(amps.len(), phases.len());
    for (z, &p) in amps.iter_mut().zip(phases) {
        *z *= C64::from_polar(1.0, -p);
    }
}

/// Applies the phase shifter `U(φ)`.
pub fn phase_apply(psi: &StateVector, phi: &PhaseVector) -> Result<StateVector> {
    if psi.dim() != phi.dim() {
        return Err(InnError::DimensionMismatch {
            expected: psi.dim(),
            found: phi.dim(),
        });
    }
    let mut out = psi.clone();
    apply_phases_in_place(&mut out.amps, &phi.phases);
    Ok(out)
}

/// Applies `U(φ)† = U(-φ)`.
pub fn phase_adjoint_apply(psi: &StateVector, phi: &PhaseVector) -> Result<StateVector> {
    if psi.dim() != phi.dim() {
        return Err(InnError::DimensionMismatch {
            expected: psi.dim(),
            found: phi.dim(),
        });
    }
    let mut out = psi.clone();
    apply_phases_adjoint_in_place(&mut out.amps, &phi.phases);
    Ok(out)
}

/// Probability `|⟨0|ψ⟩|²` of detecting the particle in path 0.
pub fn readout_prob0(psi: &StateVector) -> f64 {
    psi.amps[0].norm_sqr()
}

/// Dense product of single-path controlled-phase operators
/// `CP(φ_j) = e^{iφ_j}|j⟩⟨j| + (I - |j⟩⟨j|)`, taken in order `j = 0..d`.
///
/// The result equals `diag(exp(iφ))`; this exists to validate that identity
/// on small registers.
pub fn cp_product(phi: &PhaseVector) -> Result<DMatrix<C64>> {
    let d = phi.dim();
    if d > CP_PRODUCT_MAX_DIM {
        return Err(InnError::DimensionTooLarge {
            dim: d,
            limit: CP_PRODUCT_MAX_DIM,
        });
    }
    let mut acc = DMatrix::<C64>::identity(d, d);
    for (j, &p) in phi.as_slice().iter().enumerate() {
        let mut cp = DMatrix::<C64>::identity(d, d);
        cp[(j, j)] = C64::from_polar(1.0, p);
        acc *= cp;
    }
    Ok(acc)
}

/// Encodes a row-major `height × width` image as a state of dimension
/// `height·width`; index `j·W + j'` holds `x_{jj'}/‖x‖_F`.
pub fn encode_2d(pixels: &[f64], height: usize, width: usize) -> Result<StateVector> {
    if pixels.len() != height * width {
        return Err(InnError::DimensionMismatch {
            expected: height * width,
            found: pixels.len(),
        });
    }
    amplitude_encode(pixels)
}

/// Applies `F_H ⊗ F_W` to a state laid out row-major as `height × width`.
pub fn dft2_apply(psi: &StateVector, height: usize, width: usize) -> Result<StateVector> {
    dft2(psi, height, width, false)
}

/// Applies `F_H† ⊗ F_W†`.
pub fn dft2_adjoint_apply(psi: &StateVector, height: usize, width: usize) -> Result<StateVector> {
    dft2(psi, height, width, true)
}

fn dft2(psi: &StateVector, height: usize, width: usize, adjoint: bool) -> Result<StateVector> {
    if height == 0 || width == 0 {
        return Err(InnError::InvalidDimension("2D register sides must be positive".into()));
    }
    if psi.dim() != height * width {
        return Err(InnError::DimensionMismatch {
            expected: height * width,
            found: psi.dim(),
        });
    }
    let row_plan = DftPlan::new(width);
    let col_plan = DftPlan::new(height);
    let run = |plan: &DftPlan, buf: &mut [C64]| {
        if adjoint {
            plan.adjoint(buf)
        } else {
            plan.forward(buf)
        }
    };
    let mut out = psi.clone();
    for row in out.amps.chunks_exact_mut(width) {
        run(&row_plan, row);
    }
    let mut column = vec![C64::new(0.0, 0.0); height];
    for c in 0..width {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = out.amps[r * width + c];
        }
        run(&col_plan, &mut column);
        for (r, &v) in column.iter().enumerate() {
            out.amps[r * width + c] = v;
        }
    }
    Ok(out)
}
