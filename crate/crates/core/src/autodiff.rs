//! Reverse-mode gradients for interferometric networks.
//!
//! Adjoints follow the convention `δℒ = Re Σ_k conj(ā_k) δa_k` for a complex
//! intermediate `a`. With that convention:
//!
//! * `a = F b` gives `b̄ = F† ā`;
//! * `b = U(φ) a` gives `ā = U(φ)† b̄` and `∂ℒ/∂φ_j = Im(b̄_j conj(b_j))`;
//! * the readout `p = |a_0|²` gives `ā = 2 (∂ℒ/∂p) a_0 e_0`, so the adjoint
//!   entering the last phase shifter is the constant vector
//!   `2 (∂ℒ/∂p) a_0 / √d` and no transform is needed for it;
//! * amplitude encoding `x̂ = x / n` gives `x̄ = (r - x̂ (x̂·r)) / n` with
//!   `r = Re ψ̄`; when the norm was clamped the norm term is dropped.
//!
//! A block shares the leading `F|x⟩` among its sequences, so their input
//! adjoints are summed before a single `F†`.

use rayon::prelude::*;

use crate::error::{InnError, Result};
use crate::model::{InputEncoding, Network, SequenceParams};
use crate::tensor::{
    amplitude_encode, amplitude_encode_clamped, apply_phases_adjoint_in_place, apply_phases_in_place, DftPlan,
    StateVector, C64,
};

/// States produced inside one sequence: after each phase shifter and after
/// each following beamsplitter, `2L` in total.
#[derive(Debug, Clone)]
pub struct SequenceTrace {
    states: Vec<Vec<C64>>,
}

impl SequenceTrace {
    pub fn depth(&self) -> usize {
        self.states.len() / 2
    }

    /// State leaving phase shifter `layer` (zero-based).
    pub fn post_phase(&self, layer: usize) -> &[C64] {
        &self.states[2 * layer]
    }

    /// State leaving the beamsplitter after phase shifter `layer`.
    pub fn post_dft(&self, layer: usize) -> &[C64] {
        &self.states[2 * layer + 1]
    }

    /// Final output state of the sequence.
    pub fn output(&self) -> &[C64] {
        self.states.last().expect("sequence has at least one layer")
    }
}

/// Runs a sequence whose leading `F` has already been applied to the input.
pub fn trace_sequence(seq: &SequenceParams, plan: &DftPlan, transformed_input: &[C64]) -> SequenceTrace {
    let mut states = Vec::with_capacity(2 * seq.depth());
    let mut amps = transformed_input.to_vec();
    for l in 0..seq.depth() {
        apply_phases_in_place(&mut amps, seq.layer(l));
        states.push(amps.clone());
        plan.forward(&mut amps);
        states.push(amps.clone());
    }
    SequenceTrace { states }
}

/// Propagates `adjoint` (the adjoint of the state leaving the last phase
/// shifter) back through the sequence.
///
/// Writes `∂ℒ/∂φ^l_j` into `grads` (row-major `L × d`, accumulated with
/// `+=`) and returns the adjoint of the transformed input `F|x⟩`.
pub fn backward_sequence(
    seq: &SequenceParams,
    plan: &DftPlan,
    trace: &SequenceTrace,
    mut adjoint: Vec<C64>,
    grads: &mut [f64],
) -> Vec<C64> {
    let d = seq.dim();
    for l in (0..seq.depth()).rev() {
        let b = trace.post_phase(l);
        for ((g, a), z) in grads[l * d..(l + 1) * d].iter_mut().zip(&adjoint).zip(b) {
            *g += (a * z.conj()).im;
        }
        apply_phases_adjoint_in_place(&mut adjoint, seq.layer(l));
        if l > 0 {
            plan.adjoint(&mut adjoint);
        }
    }
    adjoint
}

/// Everything one block computed during a cached forward pass.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    input: Vec<f64>,
    norm: f64,
    clamped: bool,
    encoded: StateVector,
    transformed: StateVector,
    sequences: Vec<SequenceTrace>,
    probs: Vec<f64>,
}

impl BlockTrace {
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    /// The divisor used when encoding the input (after clamping).
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn clamped(&self) -> bool {
        self.clamped
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sequence(&self, t: usize) -> &SequenceTrace {
        &self.sequences[t]
    }
}

/// Intermediate values of one forward pass, sufficient for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    blocks: Vec<BlockTrace>,
}

impl ForwardCache {
    pub fn outputs(&self) -> &[f64] {
        &self.blocks.last().expect("network has a block").probs
    }

    pub fn blocks(&self) -> &[BlockTrace] {
        &self.blocks
    }

    /// All states seen by sequence `t` of block `m`: the encoded input, the
    /// shared `F|x⟩`, then the post-`U` and post-`F` state of every layer
    /// (`2L + 2` entries).
    pub fn sequence_states(&self, m: usize, t: usize) -> Vec<&[C64]> {
        let b = &self.blocks[m];
        let mut out = vec![b.encoded.amplitudes(), b.transformed.amplitudes()];
        out.extend(b.sequences[t].states.iter().map(|s| s.as_slice()));
        out
    }
}

fn trace_block(net: &Network, m: usize, input: Vec<f64>, encoded: StateVector, norm: f64, clamped: bool) -> BlockTrace {
    let plan = net.plan(m);
    let block = &net.blocks()[m];
    let mut transformed = encoded.amplitudes().to_vec();
    plan.forward(&mut transformed);
    let sequences: Vec<SequenceTrace> = block
        .sequences()
        .par_iter()
        .map(|seq| trace_sequence(seq, plan, &transformed))
        .collect();
    let probs = sequences.iter().map(|s| s.output()[0].norm_sqr()).collect();
    BlockTrace {
        input,
        norm,
        clamped,
        encoded,
        transformed: StateVector::from_amplitudes(transformed).expect("finite transform"),
        sequences,
        probs,
    }
}

/// Forward pass with the given outer-boundary encoding, keeping every
/// intermediate state.
pub fn forward_with_cache_encoded(
    net: &Network,
    x: &[f64],
    encoding: InputEncoding,
) -> Result<(Vec<f64>, ForwardCache)> {
    if x.len() != net.arch().input_dim() {
        return Err(InnError::DimensionMismatch {
            expected: net.arch().input_dim(),
            found: x.len(),
        });
    }
    let mut blocks = Vec::with_capacity(net.blocks().len());
    for m in 0..net.blocks().len() {
        let input = match blocks.last() {
            None => x.to_vec(),
            Some(prev) => {
                let prev: &BlockTrace = prev;
                prev.probs.clone()
            }
        };
        let raw_norm = input.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (encoded, norm) = if m == 0 && encoding == InputEncoding::Strict {
            let e = amplitude_encode(&input)?;
            (e, raw_norm)
        } else {
            amplitude_encode_clamped(&input)
        };
        let clamped = norm > raw_norm;
        blocks.push(trace_block(net, m, input, encoded, norm, clamped));
    }
    let cache = ForwardCache {
        fingerprint: net.fingerprint(),
        blocks,
    };
    Ok((cache.outputs().to_vec(), cache))
}

/// Forward pass with strict outer encoding.
pub fn forward_with_cache(net: &Network, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    forward_with_cache_encoded(net, x, InputEncoding::Strict)
}

/// `∂ℒ/∂φ` for every phase, shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    blocks: Vec<Vec<Vec<f64>>>,
    depths: Vec<usize>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            blocks: net
                .blocks()
                .iter()
                .map(|b| b.sequences().iter().map(|s| vec![0.0; s.phases().len()]).collect())
                .collect(),
            depths: net.arch().depths().to_vec(),
        }
    }

    /// Gradient for block `m`, sequence `t`, layer `l` (zero-based), path `j`.
    pub fn get(&self, m: usize, t: usize, l: usize, j: usize) -> f64 {
        let seq = &self.blocks[m][t];
        let d = seq.len() / self.depths[m];
        seq[l * d + j]
    }

    pub fn sequence(&self, m: usize, t: usize) -> &[f64] {
        &self.blocks[m][t]
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().flatten().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in (block, sequence, layer, path) order, matching
    /// [`Network::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for s in self.blocks.iter().flatten() {
            out.extend_from_slice(s);
        }
        out
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.blocks.iter_mut().flatten().zip(other.blocks.iter().flatten()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.blocks.iter_mut().flatten() {
            for x in s.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().flatten().all(|x| x.is_finite())
    }
}

/// Result of [`backward`]: parameter gradients and, when requested, the
/// gradient with respect to the raw network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: GradientSet,
    pub input: Option<Vec<f64>>,
}

/// Backpropagates `loss_adjoints = ∂ℒ/∂p_out` through the cached pass.
pub fn backward(net: &Network, cache: &ForwardCache, loss_adjoints: &[f64]) -> Result<GradientSet> {
    Ok(backward_full(net, cache, loss_adjoints, false)?.params)
}

/// Like [`backward`], also returning `∂ℒ/∂x` for the outer input.
pub fn backward_with_input(
    net: &Network,
    cache: &ForwardCache,
    loss_adjoints: &[f64],
) -> Result<(GradientSet, Vec<f64>)> {
    let g = backward_full(net, cache, loss_adjoints, true)?;
    Ok((g.params, g.input.expect("input gradient requested")))
}

pub fn backward_full(
    net: &Network,
    cache: &ForwardCache,
    loss_adjoints: &[f64],
    want_input: bool,
) -> Result<Gradients> {
    if cache.blocks.len() != net.blocks().len() || cache.fingerprint != net.fingerprint() {
        return Err(InnError::StaleCache);
    }
    if loss_adjoints.len() != net.arch().output_dim() {
        return Err(InnError::DimensionMismatch {
            expected: net.arch().output_dim(),
            found: loss_adjoints.len(),
        });
    }
    let mut params = GradientSet::zeros_like(net);
    let mut upstream = loss_adjoints.to_vec();
    let mut input = None;
    for m in (0..net.blocks().len()).rev() {
        let block = &net.blocks()[m];
        let trace = &cache.blocks[m];
        let plan = net.plan(m);
        let need_input = m > 0 || want_input;
        let d = block.d_in();
        let root = 1.0 / (d as f64).sqrt();
        let per_seq: Vec<(Vec<f64>, Option<Vec<C64>>)> = block
            .sequences()
            .par_iter()
            .zip(&trace.sequences)
            .zip(&upstream)
            .map(|((seq, st), &gbar)| {
                let mut grads = vec![0.0; seq.phases().len()];
                if gbar == 0.0 {
                    return (grads, None);
                }
                let c = st.output()[0];
                let start = vec![c * (2.0 * gbar * root); d];
                let adj = backward_sequence(seq, plan, st, start, &mut grads);
                (grads, need_input.then_some(adj))
            })
            .collect();
        let mut acc = vec![C64::new(0.0, 0.0); d];
        for (t, (grads, adj)) in per_seq.into_iter().enumerate() {
            params.blocks[m][t] = grads;
            if let Some(adj) = adj {
                for (a, v) in acc.iter_mut().zip(adj) {
                    *a += v;
                }
            }
        }
        if !need_input {
            break;
        }
        plan.adjoint(&mut acc);
        upstream = encoding_adjoint(trace, &acc);
        if m == 0 {
            input = Some(upstream.clone());
        }
    }
    Ok(Gradients { params, input })
}

fn encoding_adjoint(trace: &BlockTrace, state_adjoint: &[C64]) -> Vec<f64> {
    let n = trace.norm;
    let r: Vec<f64> = state_adjoint.iter().map(|z| z.re).collect();
    if trace.clamped {
        return r.iter().map(|v| v / n).collect();
    }
    let xhat: Vec<f64> = trace.encoded.amplitudes().iter().map(|z| z.re).collect();
    let proj: f64 = xhat.iter().zip(&r).map(|(a, b)| a * b).sum();
    r.iter().zip(&xhat).map(|(ri, xi)| (ri - xi * proj) / n).collect()
}

/// Samples per work unit in [`ordered_batch_sum`]. The summation order is
/// fixed by this constant, not by the thread count.
pub const REDUCE_CHUNK: usize = 8;

/// Sums the gradients `f(i).0` for `i < count` and collects the per-sample
/// scalars `f(i).1` in index order. Samples run in parallel; the reduction
/// order is always the same, so results are bit-identical for any thread
/// count.
pub fn ordered_batch_sum<F>(count: usize, len: usize, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(usize) -> Result<(Vec<f64>, f64)> + Sync,
{
    let partials: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..count.div_ceil(REDUCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut g = vec![0.0; len];
            let mut scalars = Vec::with_capacity(REDUCE_CHUNK);
            for i in c * REDUCE_CHUNK..((c + 1) * REDUCE_CHUNK).min(count) {
                let (gi, si) = f(i)?;
                if gi.len() != len {
                    return Err(InnError::DimensionMismatch {
                        expected: len,
                        found: gi.len(),
                    });
                }
                for (a, b) in g.iter_mut().zip(&gi) {
                    *a += b;
                }
                scalars.push(si);
            }
            Ok((g, scalars))
        })
        .collect();
    let mut total = vec![0.0; len];
    let mut scalars = Vec::with_capacity(count);
    for p in partials {
        let (g, s) = p?;
        for (a, b) in total.iter_mut().zip(&g) {
            *a += b;
        }
        scalars.extend(s);
    }
    Ok((total, scalars))
}

/// A scalar loss of the network outputs with its analytic gradient.
pub trait OutputLoss {
    fn value(&self, outputs: &[f64]) -> f64;
    fn adjoint(&self, outputs: &[f64]) -> Vec<f64>;
}

/// `ℒ = Σ_t w_t p_t`; with a single unit weight this is the raw readout.
#[derive(Debug, Clone)]
pub struct WeightedReadout(pub Vec<f64>);

impl OutputLoss for WeightedReadout {
    fn value(&self, outputs: &[f64]) -> f64 {
        outputs.iter().zip(&self.0).map(|(p, w)| p * w).sum()
    }

    fn adjoint(&self, _outputs: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// Default central-difference step on phases.
pub const GRAD_CHECK_STEP: f64 = 1e-6;

/// Largest parameter vector [`grad_check`] will perturb.
pub const GRAD_CHECK_MAX_PARAMS: usize = 10_000;

/// Max over parameters of `|analytic - fd| / max(1, |fd|)` where `fd` is the
/// central difference of `f` with step `h`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() > GRAD_CHECK_MAX_PARAMS {
        return Err(InnError::DimensionTooLarge {
            dim: params.len(),
            limit: GRAD_CHECK_MAX_PARAMS,
        });
    }
    if analytic.len() != params.len() {
        return Err(InnError::DimensionMismatch {
            expected: params.len(),
            found: analytic.len(),
        });
    }
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = f(&probe);
        probe[i] = params[i] - h;
        let down = f(&probe);
        probe[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}

/// [`grad_check`] of `loss(network(x))` over all phases of `net`.
pub fn grad_check_network(net: &Network, x: &[f64], loss: &dyn OutputLoss, h: f64) -> Result<f64> {
    let (out, cache) = forward_with_cache(net, x)?;
    let analytic = backward(net, &cache, &loss.adjoint(&out))?.flatten();
    let mut probe = net.clone();
    grad_check(
        |theta| {
            probe.set_flat_params(theta).expect("same shape");
            loss.value(&probe.forward(x, InputEncoding::Strict).expect("valid input"))
        },
        &net.flat_params(),
        &analytic,
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{network_forward, NetworkArch};
    use crate::optim::xavier_init;
    use crate::rng;
    use rand::Rng;

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, "test-input");
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    fn random_phases(net: &mut Network, seed: u64) {
        let mut r = rng::stream(seed, "test-phases");
        let flat: Vec<f64> = (0..net.param_count()).map(|_| r.random_range(-3.0..3.0)).collect();
        net.set_flat_params(&flat).unwrap();
    }

    #[test]
    fn cache_outputs_are_bit_identical_to_plain_forward() {
        let arch = NetworkArch::new(vec![8, 4, 2], vec![2, 2]).unwrap();
        let net = xavier_init(&arch, 2);
        let x = random_input(8, 1);
        let (out, cache) = forward_with_cache(&net, &x).unwrap();
        let plain = network_forward(&net, &x).unwrap();
        assert_eq!(out.len(), plain.len());
        for (a, b) in out.iter().zip(&plain) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for m in 0..2 {
            for t in 0..arch.dims()[m + 1] {
                let states = cache.sequence_states(m, t);
                assert_eq!(states.len(), 2 * arch.depths()[m] + 2);
                for s in states {
                    let n: f64 = s.iter().map(|z| z.norm_sqr()).sum();
                    assert!((n - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn maximum_readout_is_stationary() {
        let arch = NetworkArch::new(vec![2, 1], vec![1]).unwrap();
        let net = Network::zeros(arch);
        let (out, cache) = forward_with_cache(&net, &[1.0, 0.0]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
        let g = backward(&net, &cache, &[1.0]).unwrap();
        assert!(g.flatten().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn layer_gradients_sum_to_zero() {
        let arch = NetworkArch::new(vec![8, 4, 2], vec![2, 3]).unwrap();
        let mut net = Network::zeros(arch.clone());
        random_phases(&mut net, 5);
        let x = random_input(8, 6);
        let (_, cache) = forward_with_cache(&net, &x).unwrap();
        let g = backward(&net, &cache, &[0.7, -1.3]).unwrap();
        for m in 0..2 {
            let d = arch.dims()[m];
            for t in 0..arch.dims()[m + 1] {
                for row in g.sequence(m, t).chunks(d) {
                    assert!(row.iter().sum::<f64>().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn readout_gradient_matches_finite_differences() {
        let arch = NetworkArch::new(vec![6, 3, 2], vec![2, 2]).unwrap();
        let mut net = Network::zeros(arch);
        random_phases(&mut net, 8);
        let x = random_input(6, 9);
        let err = grad_check_network(&net, &x, &WeightedReadout(vec![1.0, -0.5]), GRAD_CHECK_STEP).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let arch = NetworkArch::new(vec![5, 3, 1], vec![2, 1]).unwrap();
        let mut net = Network::zeros(arch);
        random_phases(&mut net, 10);
        let x = random_input(5, 11);
        let (_, cache) = forward_with_cache(&net, &x).unwrap();
        let (_, gx) = backward_with_input(&net, &cache, &[1.0]).unwrap();
        let err = grad_check(|xx| network_forward(&net, xx).unwrap()[0], &x, &gx, 1e-6).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn stale_cache_is_rejected() {
        let arch = NetworkArch::new(vec![4, 2], vec![1]).unwrap();
        let mut net = xavier_init(&arch, 1);
        let (_, cache) = forward_with_cache(&net, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        net.blocks_mut()[0].sequences_mut()[0].phases_mut()[0] += 1e-3;
        assert!(matches!(backward(&net, &cache, &[1.0, 1.0]), Err(InnError::StaleCache)));
        let other = xavier_init(&NetworkArch::new(vec![4, 3], vec![1]).unwrap(), 1);
        assert!(backward(&other, &cache, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn grad_check_guards_size() {
        let big = vec![0.0; GRAD_CHECK_MAX_PARAMS + 1];
        assert!(grad_check(|_| 0.0, &big, &big, 1e-6).is_err());
        let err = grad_check(|_| 1.0, &[0.5, 0.5], &[0.0, 0.0], 1e-6).unwrap();
        assert!(err <= 1e-8);
    }
}
