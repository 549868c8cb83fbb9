//! Interferometer sequences, blocks of parallel sequences, and multi-block
//! networks.
//!
//! A sequence of depth `L` over `d` paths computes
//! `|x,Φ⟩ = (Π_{l=1..L} F U(φ^l)) F |x⟩` and reads out `p = |⟨0|x,Φ⟩|²`.
//! The leading `F` is applied once, so a depth-`L` sequence contains `L + 1`
//! beamsplitters and `L` phase shifters.
//!
//! A block runs `d_out` independent sequences on the same encoded input and
//! returns their `d_out` probabilities. A network chains blocks, amplitude
//! encoding each block's raw probability vector as the next block's input.

mod checkpoint;
mod heads;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use heads::{generator_head, generator_head_contrast, softmax, tanh_head, GENERATOR_CONTRAST};

use crate::error::{InnError, Result};
use crate::tensor::{amplitude_encode, amplitude_encode_clamped, apply_phases_in_place, DftPlan, StateVector, C64};

/// Block dimensions `d = (d_0, …, d_M)` and depths `L = (L_0, …, L_{M-1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArch {
    dims: Vec<usize>,
    depths: Vec<usize>,
}

impl NetworkArch {
    pub fn new(dims: Vec<usize>, depths: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(InnError::InvalidArchitecture(
                "need at least an input and an output dimension".into(),
            ));
        }
        if depths.len() != dims.len() - 1 {
            return Err(InnError::InvalidArchitecture(format!(
                "{} dimensions need {} depths, got {}",
                dims.len(),
                dims.len() - 1,
                depths.len()
            )));
        }
        if dims.contains(&0) {
            return Err(InnError::InvalidArchitecture("dimensions must be positive".into()));
        }
        if depths.contains(&0) {
            return Err(InnError::InvalidArchitecture("depths must be at least 1".into()));
        }
        Ok(Self { dims, depths })
    }

    /// Parses `d=256,64,10;L=2,2` (also accepts `d=…,L=…` when the split is
    /// unambiguous, i.e. `L=` appears once).
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || {
            InnError::Config(format!(
                "malformed architecture {spec:?}; expected d=<d0,...,dM>;L=<L0,...>"
            ))
        };
        let s: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        let l_pos = s.find("L=").ok_or_else(bad)?;
        let d_part = s[..l_pos].trim_end_matches([';', ',']);
        let l_part = &s[l_pos + 2..];
        let d_part = d_part.strip_prefix("d=").ok_or_else(bad)?;
        let nums = |part: &str| -> Result<Vec<usize>> {
            part.split(',').map(|t| t.parse::<usize>().map_err(|_| bad())).collect()
        };
        Self::new(nums(d_part)?, nums(l_part)?)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn num_blocks(&self) -> usize {
        self.depths.len()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Number of trainable phases, `Σ_m d_{m+1} · L_m · d_m`.
    pub fn param_count(&self) -> usize {
        (0..self.num_blocks())
            .map(|m| self.dims[m + 1] * self.depths[m] * self.dims[m])
            .sum()
    }
}

impl fmt::Display for NetworkArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "d={};L={}", join(&self.dims), join(&self.depths))
    }
}

/// `Σ_m d_{m+1} · L_m · d_m`.
pub fn param_count(arch: &NetworkArch) -> usize {
    arch.param_count()
}

/// Phases `Φ = (φ¹, …, φ^L)` of one sequence, stored row-major `L × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceParams {
    dim: usize,
    depth: usize,
    phases: Vec<f64>,
}

impl SequenceParams {
    pub fn zeros(dim: usize, depth: usize) -> Self {
        Self {
            dim,
            depth,
            phases: vec![0.0; dim * depth],
        }
    }

    pub fn from_phases(dim: usize, depth: usize, phases: Vec<f64>) -> Result<Self> {
        if dim == 0 || depth == 0 {
            return Err(InnError::InvalidArchitecture(
                "sequence needs positive dimension and depth".into(),
            ));
        }
        if phases.len() != dim * depth {
            return Err(InnError::DimensionMismatch {
                expected: dim * depth,
                found: phases.len(),
            });
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(InnError::NonFinite("sequence phases"));
        }
        Ok(Self { dim, depth, phases })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn phases_mut(&mut self) -> &mut [f64] {
        &mut self.phases
    }

    /// `φ^{layer+1}`, zero-based.
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.phases[layer * self.dim..(layer + 1) * self.dim]
    }

    /// Dense unitary matrix of the sequence, for validation on small `d`.
    pub fn dense_matrix(&self) -> nalgebra::DMatrix<C64> {
        let plan = DftPlan::new(self.dim);
        let mut out = nalgebra::DMatrix::<C64>::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            let col = run_sequence(self, &plan, StateVector::basis(self.dim, j).into_amplitudes());
            for (k, z) in col.into_iter().enumerate() {
                out[(k, j)] = z;
            }
        }
        out
    }
}

/// Applies the full sequence unitary to `amps` (taking ownership of the
/// buffer).
pub(crate) fn run_sequence(seq: &SequenceParams, plan: &DftPlan, mut amps: Vec<C64>) -> Vec<C64> {
    plan.forward(&mut amps);
    for l in 0..seq.depth {
        apply_phases_in_place(&mut amps, seq.layer(l));
        plan.forward(&mut amps);
    }
    amps
}

/// Runs one sequence on `psi_in` and returns the output state and `p`.
pub fn sequence_forward(seq: &SequenceParams, psi_in: &StateVector) -> Result<(StateVector, f64)> {
    if psi_in.dim() != seq.dim {
        return Err(InnError::DimensionMismatch {
            expected: seq.dim,
            found: psi_in.dim(),
        });
    }
    let plan = DftPlan::new(seq.dim);
    let out = run_sequence(seq, &plan, psi_in.amplitudes().to_vec());
    let p = out[0].norm_sqr();
    Ok((StateVector::from_amplitudes(out)?, p))
}

/// `d_out` independent sequences sharing input dimension and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    d_in: usize,
    depth: usize,
    sequences: Vec<SequenceParams>,
}

impl BlockParams {
    pub fn zeros(d_in: usize, d_out: usize, depth: usize) -> Self {
        Self {
            d_in,
            depth,
            sequences: (0..d_out).map(|_| SequenceParams::zeros(d_in, depth)).collect(),
        }
    }

    pub fn from_sequences(sequences: Vec<SequenceParams>) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| InnError::InvalidArchitecture("block needs at least one sequence".into()))?;
        let (d_in, depth) = (first.dim, first.depth);
        if sequences.iter().any(|s| s.dim != d_in || s.depth != depth) {
            return Err(InnError::InvalidArchitecture(
                "all sequences in a block must share dimension and depth".into(),
            ));
        }
        Ok(Self { d_in, depth, sequences })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.sequences.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn sequences(&self) -> &[SequenceParams] {
        &self.sequences
    }

    pub fn sequences_mut(&mut self) -> &mut [SequenceParams] {
        &mut self.sequences
    }
}

/// Readout probabilities of every sequence in `block` for an already
/// encoded input.
pub(crate) fn block_probs(block: &BlockParams, plan: &DftPlan, psi: &[C64]) -> Vec<f64> {
    let mut shared = psi.to_vec();
    plan.forward(&mut shared);
    block
        .sequences
        .par_iter()
        .map(|seq| {
            let mut amps = shared.clone();
            for l in 0..seq.depth {
                apply_phases_in_place(&mut amps, seq.layer(l));
                plan.forward(&mut amps);
            }
            amps[0].norm_sqr()
        })
        .collect()
}

/// Amplitude-encodes `x` once and reads out every sequence of the block.
pub fn block_forward(block: &BlockParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != block.d_in {
        return Err(InnError::DimensionMismatch {
            expected: block.d_in,
            found: x.len(),
        });
    }
    let psi = amplitude_encode(x)?;
    Ok(block_probs(block, &DftPlan::new(block.d_in), psi.amplitudes()))
}

/// How a network encodes its outermost input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputEncoding {
    /// Zero-norm input is an error.
    #[default]
    Strict,
    /// Norm clamped at [`crate::tensor::EPS_NORM`], as between blocks.
    Clamped,
}

/// A network architecture together with its phases and DFT plans.
#[derive(Debug, Clone)]
pub struct Network {
    arch: NetworkArch,
    blocks: Vec<BlockParams>,
    plans: Vec<Arc<DftPlan>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.blocks == other.blocks
    }
}

impl Network {
    /// All phases zero.
    pub fn zeros(arch: NetworkArch) -> Self {
        let blocks = (0..arch.num_blocks())
            .map(|m| BlockParams::zeros(arch.dims[m], arch.dims[m + 1], arch.depths[m]))
            .collect();
        Self::assemble(arch, blocks)
    }

    pub fn from_blocks(arch: NetworkArch, blocks: Vec<BlockParams>) -> Result<Self> {
        if blocks.len() != arch.num_blocks() {
            return Err(InnError::InvalidArchitecture(format!(
                "architecture has {} blocks, got {}",
                arch.num_blocks(),
                blocks.len()
            )));
        }
        for (m, b) in blocks.iter().enumerate() {
            if b.d_in != arch.dims[m] || b.d_out() != arch.dims[m + 1] || b.depth != arch.depths[m] {
                return Err(InnError::InvalidArchitecture(format!(
                    "block {m} has shape ({}→{}, L={}), architecture wants ({}→{}, L={})",
                    b.d_in,
                    b.d_out(),
                    b.depth,
                    arch.dims[m],
                    arch.dims[m + 1],
                    arch.depths[m]
                )));
            }
        }
        Ok(Self::assemble(arch, blocks))
    }

    fn assemble(arch: NetworkArch, blocks: Vec<BlockParams>) -> Self {
        let mut plans: Vec<Arc<DftPlan>> = Vec::with_capacity(blocks.len());
        for m in 0..arch.num_blocks() {
            let d = arch.dims[m];
            let plan = plans
                .iter()
                .find(|p| p.dim() == d)
                .cloned()
                .unwrap_or_else(|| DftPlan::shared(d));
            plans.push(plan);
        }
        Self { arch, blocks, plans }
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn blocks(&self) -> &[BlockParams] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [BlockParams] {
        &mut self.blocks
    }

    pub(crate) fn plan(&self, block: usize) -> &DftPlan {
        &self.plans[block]
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Phases in (block, sequence, layer, path) order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in &self.blocks {
            for s in &b.sequences {
                out.extend_from_slice(&s.phases);
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(InnError::DimensionMismatch {
                expected: self.param_count(),
                found: flat.len(),
            });
        }
        if flat.iter().any(|p| !p.is_finite()) {
            return Err(InnError::NonFinite("network phases"));
        }
        let mut rest = flat;
        for b in &mut self.blocks {
            for s in &mut b.sequences {
                let (head, tail) = rest.split_at(s.phases.len());
                s.phases.copy_from_slice(head);
                rest = tail;
            }
        }
        Ok(())
    }

    /// Order-sensitive checksum of every phase's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &d in self.arch.dims.iter().chain(&self.arch.depths) {
            h = (h ^ d as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
        for b in &self.blocks {
            for s in &b.sequences {
                for p in &s.phases {
                    h = (h ^ p.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Output probabilities `p` of the last block.
    pub fn forward(&self, x: &[f64], encoding: InputEncoding) -> Result<Vec<f64>> {
        if x.len() != self.arch.input_dim() {
            return Err(InnError::DimensionMismatch {
                expected: self.arch.input_dim(),
                found: x.len(),
            });
        }
        let mut psi = match encoding {
            InputEncoding::Strict => amplitude_encode(x)?,
            InputEncoding::Clamped => amplitude_encode_clamped(x).0,
        };
        let mut p = Vec::new();
        for (m, block) in self.blocks.iter().enumerate() {
            if m > 0 {
                psi = amplitude_encode_clamped(&p).0;
            }
            p = block_probs(block, self.plan(m), psi.amplitudes());
        }
        Ok(p)
    }
}

/// Runs the whole network on `x` with strict outer encoding.
pub fn network_forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    net.forward(x, InputEncoding::Strict)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::optim::xavier_init;

    #[test]
    fn balanced_two_path_interferometer() {
        let seq = SequenceParams::from_phases(2, 1, vec![0.0, 0.0]).unwrap();
        let (_, p) = sequence_forward(&seq, &StateVector::basis(2, 0)).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        let seq = SequenceParams::from_phases(2, 1, vec![0.0, PI]).unwrap();
        let (_, p) = sequence_forward(&seq, &StateVector::basis(2, 0)).unwrap();
        assert!(p.abs() < 1e-15);
        assert!(sequence_forward(&seq, &StateVector::basis(3, 0)).is_err());
    }

    #[test]
    fn zero_phase_block_examples() {
        // L=1 is F²|0⟩ = |0⟩; L=2 is F³|0⟩ = F†|0⟩, uniform, so p = 1/d.
        let block = BlockParams::zeros(2, 3, 1);
        for v in block_forward(&block, &[1.0, 0.0]).unwrap() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let block = BlockParams::zeros(2, 3, 2);
        for v in block_forward(&block, &[1.0, 0.0]).unwrap() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn single_sequence_block_is_sequence_forward() {
        let arch = NetworkArch::new(vec![8, 1], vec![3]).unwrap();
        let net = xavier_init(&arch, 4);
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.9).cos()).collect();
        let p_block = block_forward(&net.blocks()[0], &x).unwrap();
        let psi = amplitude_encode(&x).unwrap();
        let (_, p_seq) = sequence_forward(&net.blocks()[0].sequences()[0], &psi).unwrap();
        assert_eq!(p_block, vec![p_seq]);
    }

    #[test]
    fn perturbing_one_sequence_changes_only_its_output() {
        let arch = NetworkArch::new(vec![8, 4], vec![2]).unwrap();
        let mut net = xavier_init(&arch, 9);
        let x: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let before = network_forward(&net, &x).unwrap();
        net.blocks_mut()[0].sequences_mut()[2].phases_mut()[5] += 0.3;
        let after = network_forward(&net, &x).unwrap();
        for t in 0..4 {
            if t == 2 {
                assert_ne!(before[t], after[t]);
            } else {
                assert_eq!(before[t].to_bits(), after[t].to_bits());
            }
        }
    }

    #[test]
    fn two_block_zero_phase_example() {
        let arch = NetworkArch::new(vec![2, 2, 2], vec![1, 1]).unwrap();
        let net = Network::zeros(arch);
        let p = network_forward(&net, &[1.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn network_rejects_zero_input_but_clamps_on_request() {
        let net = Network::zeros(NetworkArch::new(vec![4, 2], vec![1]).unwrap());
        assert!(matches!(
            network_forward(&net, &[0.0; 4]),
            Err(InnError::ZeroNormInput { .. })
        ));
        let p = net.forward(&[0.0; 4], InputEncoding::Clamped).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn param_count_examples() {
        let celeba_d = NetworkArch::new(vec![1024, 128, 1], vec![3, 3]).unwrap();
        let celeba_g = NetworkArch::new(vec![32, 128, 1024], vec![3, 3]).unwrap();
        assert_eq!(param_count(&celeba_d), 393_600);
        assert_eq!(param_count(&celeba_g), 405_504);
        assert_eq!(param_count(&NetworkArch::new(vec![2, 2], vec![1]).unwrap()), 4);
        let net = Network::zeros(celeba_g);
        assert_eq!(net.flat_params().len(), 405_504);
    }

    #[test]
    fn arch_parsing() {
        let a = NetworkArch::parse("d=256,64,10;L=2,2").unwrap();
        assert_eq!(a.dims(), &[256, 64, 10]);
        assert_eq!(a.depths(), &[2, 2]);
        assert_eq!(NetworkArch::parse("d=16,8,4,L=2,2").unwrap().depths(), &[2, 2]);
        assert_eq!(NetworkArch::parse(&a.to_string()).unwrap(), a);
        assert!(NetworkArch::parse("d=16,8;L=2,2").is_err());
        assert!(NetworkArch::parse("16,8").is_err());
        assert!(NetworkArch::new(vec![4, 0], vec![1]).is_err());
        assert!(NetworkArch::new(vec![4, 2], vec![0]).is_err());
    }

    #[test]
    fn flat_params_round_trip() {
        let arch = NetworkArch::new(vec![4, 3, 2], vec![2, 1]).unwrap();
        let net = xavier_init(&arch, 1);
        let mut other = Network::zeros(arch);
        other.set_flat_params(&net.flat_params()).unwrap();
        assert_eq!(other, net);
        assert_eq!(other.fingerprint(), net.fingerprint());
        assert!(other.set_flat_params(&[0.0; 3]).is_err());
    }
}
