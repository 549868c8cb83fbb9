//! Variational QUBO solving with a single interferometer sequence.
//!
//! A QUBO instance over `n` binary variables is the diagonal Hamiltonian
//! `H = Σ_{μν} Q_{μν} P_μ P_ν` on `d = 2^n` paths. Bitstrings use the
//! big-endian convention `j = Σ_μ 2^{n-μ} j_μ` (μ = 1..n), so variable 0 is
//! the most significant bit of the path index.
//!
//! The ansatz is the sequence `|Φ⟩ = (Π F U(φ^l)) F |0⟩`. Training minimizes
//! the exact expectation `ℰ(Φ) = Σ_j E_j |⟨j|Φ⟩|²` with one full-gradient Adam
//! step per epoch, then reads out the most probable bitstring.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::autodiff::{backward_sequence, trace_sequence};
use crate::error::{InnError, Result};
use crate::model::SequenceParams;
use crate::optim::{xavier_bound, AdamConfig, AdamState, InitScheme};
use crate::report::fmt_f64;
use crate::rng;
use crate::tensor::{DftPlan, StateVector, C64};

/// Largest `n` the simulator accepts.
pub const MAX_QUBITS: usize = 24;

/// Relative energy tolerance for counting a solution as the exact optimum.
pub const EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuboDistribution {
    /// i.i.d. integers uniform on `{-10, …, 10}`.
    UniformInt,
    /// i.i.d. standard normal.
    StdNormal,
}

impl QuboDistribution {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_int" | "uniform-int" => Ok(Self::UniformInt),
            "normal" | "std_normal" | "std-normal" => Ok(Self::StdNormal),
            other => Err(InnError::Config(format!(
                "unknown QUBO distribution {other:?} (expected uniform or normal)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::UniformInt => "uniform",
            Self::StdNormal => "normal",
        }
    }
}

/// An `n × n` real QUBO matrix (not necessarily symmetric).
#[derive(Debug, Clone, PartialEq)]
pub struct QuboInstance {
    n: usize,
    q: Vec<f64>,
    pub seed: Option<u64>,
    pub distribution: Option<QuboDistribution>,
}

impl QuboInstance {
    /// Builds an instance from a row-major `n × n` matrix.
    pub fn new(n: usize, q: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(InnError::InvalidDimension("QUBO needs at least one variable".into()));
        }
        if n > MAX_QUBITS {
            return Err(InnError::DimensionTooLarge {
                dim: n,
                limit: MAX_QUBITS,
            });
        }
        if q.len() != n * n {
            return Err(InnError::DimensionMismatch {
                expected: n * n,
                found: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(InnError::NonFinite("QUBO matrix"));
        }
        Ok(Self {
            n,
            q,
            seed: None,
            distribution: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn q(&self, mu: usize, nu: usize) -> f64 {
        self.q[mu * self.n + nu]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.q
    }
}

/// Draws `Q` i.i.d. from `dist`, reproducibly from `seed`.
pub fn sample_instance(dist: QuboDistribution, n: usize, seed: u64) -> Result<QuboInstance> {
    if n > MAX_QUBITS {
        return Err(InnError::DimensionTooLarge {
            dim: n,
            limit: MAX_QUBITS,
        });
    }
    let mut r = rng::stream(seed, "qubo.instance");
    let q: Vec<f64> = (0..n * n)
        .map(|_| match dist {
            QuboDistribution::UniformInt => r.random_range(-10i32..=10) as f64,
            QuboDistribution::StdNormal => r.sample(StandardNormal),
        })
        .collect();
    let mut inst = QuboInstance::new(n, q)?;
    inst.seed = Some(seed);
    inst.distribution = Some(dist);
    Ok(inst)
}

/// Diagonal of `H`: `E_j = Σ_{μν} Q_{μν} j_μ j_ν` for every bitstring.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    n: usize,
    e: Vec<f64>,
}

impl EnergyTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }

    pub fn get(&self, j: usize) -> f64 {
        self.e[j]
    }
}

/// Variable index (0-based μ) carried by bit `k` (0 = least significant).
fn var_of_bit(n: usize, k: usize) -> usize {
    n - 1 - k
}

/// Builds the table incrementally: `E(j) = E(j') + Q_{μμ} + Σ_{ν∈j'} (Q_{μν} + Q_{νμ})`
/// where `j'` is `j` with its lowest set bit (variable `μ`) cleared.
pub fn energies(inst: &QuboInstance) -> EnergyTable {
    let n = inst.n;
    let d = 1usize << n;
    let mut e = vec![0.0; d];
    for j in 1..d {
        let k = j.trailing_zeros() as usize;
        let mu = var_of_bit(n, k);
        let rest = j & (j - 1);
        let mut delta = inst.q(mu, mu);
        let mut bits = rest;
        while bits != 0 {
            let nu = var_of_bit(n, bits.trailing_zeros() as usize);
            delta += inst.q(mu, nu) + inst.q(nu, mu);
            bits &= bits - 1;
        }
        e[j] = e[rest] + delta;
    }
    EnergyTable { n, e }
}

/// `Σ_j E_j |ψ_j|²`.
pub fn energy_expectation(table: &EnergyTable, psi: &StateVector) -> Result<f64> {
    if psi.dim() != table.e.len() {
        return Err(InnError::DimensionMismatch {
            expected: table.e.len(),
            found: psi.dim(),
        });
    }
    Ok(expectation(&table.e, psi.amplitudes()))
}

fn expectation(e: &[f64], amps: &[C64]) -> f64 {
    e.iter().zip(amps).map(|(ej, z)| ej * z.norm_sqr()).sum()
}

/// `⟨P_μ P_ν⟩` for every pair of variables, row-major `n × n`.
pub fn pairwise_expectations(psi: &StateVector, n: usize) -> Result<Vec<f64>> {
    if psi.dim() != 1 << n {
        return Err(InnError::DimensionMismatch {
            expected: 1 << n,
            found: psi.dim(),
        });
    }
    let mut out = vec![0.0; n * n];
    let mut set = Vec::with_capacity(n);
    for (j, z) in psi.amplitudes().iter().enumerate() {
        let w = z.norm_sqr();
        if w == 0.0 {
            continue;
        }
        set.clear();
        let mut bits = j;
        while bits != 0 {
            set.push(var_of_bit(n, bits.trailing_zeros() as usize));
            bits &= bits - 1;
        }
        for &mu in &set {
            for &nu in &set {
                out[mu * n + nu] += w;
            }
        }
    }
    Ok(out)
}

/// Global minimum and its lowest-index argmin.
pub fn brute_force_min(table: &EnergyTable) -> (f64, usize) {
    let mut best = (table.e[0], 0);
    for (j, &v) in table.e.iter().enumerate().skip(1) {
        if v < best.0 {
            best = (v, j);
        }
    }
    best
}

/// `|(E_sol - E_min) / E_min| · 100`.
pub fn optimality_gap(e_sol: f64, e_min: f64) -> Result<f64> {
    if e_min == 0.0 {
        return Err(InnError::GapUndefined);
    }
    Ok(((e_sol - e_min) / e_min).abs() * 100.0)
}

/// Whether `e_sol` counts as the global optimum.
pub fn is_exact(e_sol: f64, e_min: f64) -> bool {
    (e_sol - e_min).abs() <= EXACT_TOL * e_min.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub depth: usize,
    pub epochs: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub seed: u64,
    pub init: InitScheme,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            epochs: 201,
            lr: 0.05,
            betas: (0.5, 0.9),
            seed: 0,
            init: InitScheme::Xavier,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Most probable bitstring of the trained ansatz.
    pub j_sol: usize,
    /// `E_{j_sol}`.
    pub energy: f64,
    /// `ℰ` of the final (trained) ansatz.
    pub final_expectation: f64,
    pub params: SequenceParams,
    /// `ℰ` before each epoch's update.
    pub history: Vec<f64>,
}

/// Trains the ansatz on `inst` and extracts the most probable bitstring.
pub fn solve(inst: &QuboInstance, cfg: &SolveConfig) -> Result<Solution> {
    solve_with_table(inst, &energies(inst), cfg)
}

pub fn solve_with_table(inst: &QuboInstance, table: &EnergyTable, cfg: &SolveConfig) -> Result<Solution> {
    if cfg.depth == 0 {
        return Err(InnError::InvalidArchitecture("depth must be at least 1".into()));
    }
    let d = inst.dim();
    let plan = DftPlan::new(d);
    let mut params = SequenceParams::zeros(d, cfg.depth);
    let bound = match cfg.init {
        InitScheme::Xavier => xavier_bound(d, 1),
        InitScheme::UniformPi => std::f64::consts::PI,
    };
    let mut r = rng::stream(cfg.seed, "init");
    for p in params.phases_mut() {
        *p = r.random_range(-bound..=bound);
    }

    let mut start = StateVector::basis(d, 0).into_amplitudes();
    plan.forward(&mut start);

    let mut adam = AdamState::new(params.phases().len(), AdamConfig::new(cfg.lr, cfg.betas));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut grads = vec![0.0; params.phases().len()];
    for epoch in 0..cfg.epochs {
        let trace = trace_sequence(&params, &plan, &start);
        let out = trace.output();
        let energy = expectation(&table.e, out);
        if !energy.is_finite() {
            return Err(InnError::NonFiniteEnergy { epoch });
        }
        history.push(energy);
        let mut adj: Vec<C64> = out.iter().zip(&table.e).map(|(z, &ej)| z * (2.0 * ej)).collect();
        plan.adjoint(&mut adj);
        grads.iter_mut().for_each(|g| *g = 0.0);
        backward_sequence(&params, &plan, &trace, adj, &mut grads);
        adam.step(params.phases_mut(), &grads)?;
    }

    let trace = trace_sequence(&params, &plan, &start);
    let out = trace.output();
    let final_expectation = expectation(&table.e, out);
    if !final_expectation.is_finite() {
        return Err(InnError::NonFiniteEnergy { epoch: cfg.epochs });
    }
    let mut j_sol = 0;
    let mut best = out[0].norm_sqr();
    for (j, z) in out.iter().enumerate().skip(1) {
        let w = z.norm_sqr();
        if w > best {
            best = w;
            j_sol = j;
        }
    }
    Ok(Solution {
        j_sol,
        energy: table.e[j_sol],
        final_expectation,
        params,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub distribution: QuboDistribution,
    pub n: usize,
    pub instances: usize,
    pub seed: u64,
    pub solve: SolveConfig,
}

/// One line of the benchmark CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub instance_id: usize,
    pub seed: u64,
    pub n: usize,
    pub e_min: f64,
    pub e_sol: f64,
    pub exact_hit: bool,
    /// `None` when `E_min = 0`.
    pub gap_percent: Option<f64>,
    pub epochs: usize,
    pub wall_ms: u128,
}

pub fn instance_seed(seed: u64, instance_id: usize) -> u64 {
    rng::stream_seed(seed, &format!("qubo.bench.{instance_id}"))
}

/// Runs one benchmark instance: sample, solve, compare with exhaustive search.
pub fn bench_instance(cfg: &BenchConfig, instance_id: usize) -> Result<BenchRow> {
    let started = Instant::now();
    let seed = instance_seed(cfg.seed, instance_id);
    let inst = sample_instance(cfg.distribution, cfg.n, seed)?;
    let table = energies(&inst);
    let (e_min, _) = brute_force_min(&table);
    let sol = solve_with_table(&inst, &table, &SolveConfig { seed, ..cfg.solve })?;
    Ok(BenchRow {
        instance_id,
        seed,
        n: cfg.n,
        e_min,
        e_sol: sol.energy,
        exact_hit: is_exact(sol.energy, e_min),
        gap_percent: optimality_gap(sol.energy, e_min).ok(),
        epochs: cfg.solve.epochs,
        wall_ms: started.elapsed().as_millis(),
    })
}

/// Runs every instance; instances execute in parallel, rows come back in
/// instance order.
pub fn bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    (0..cfg.instances)
        .into_par_iter()
        .map(|i| bench_instance(cfg, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub instances: usize,
    pub exact_hits: usize,
    /// Instances with `E_min = 0`, excluded from gap statistics.
    pub gap_undefined: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
}

impl BenchSummary {
    pub fn exact_rate(&self) -> f64 {
        self.exact_hits as f64 / self.instances.max(1) as f64
    }
}

pub fn summarize(rows: &[BenchRow]) -> BenchSummary {
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_percent).collect();
    BenchSummary {
        instances: rows.len(),
        exact_hits: rows.iter().filter(|r| r.exact_hit).count(),
        gap_undefined: rows.len() - gaps.len(),
        mean_gap: if gaps.is_empty() {
            0.0
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        },
        max_gap: gaps.iter().cloned().fold(0.0, f64::max),
    }
}

pub const BENCH_CSV_HEADER: &str = "instance_id,seed,n,E_min,E_sol,exact_hit,gap_percent,epochs,wall_ms";

/// Writes the benchmark CSV. With `timing = false` the `wall_ms` column is
/// written as `0` so reruns are byte-identical.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W, timing: bool) -> std::io::Result<()> {
    writeln!(out, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.instance_id,
            r.seed,
            r.n,
            fmt_f64(r.e_min),
            fmt_f64(r.e_sol),
            u8::from(r.exact_hit),
            r.gap_percent.map(fmt_f64).unwrap_or_default(),
            r.epochs,
            if timing { r.wall_ms } else { 0 }
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_energy(inst: &QuboInstance, j: usize) -> f64 {
        let n = inst.n();
        let bit = |mu: usize| ((j >> (n - 1 - mu)) & 1) as f64;
        let mut e = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                e += inst.q(mu, nu) * bit(mu) * bit(nu);
            }
        }
        e
    }

    #[test]
    fn energy_table_examples() {
        let id = QuboInstance::new(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(energies(&id).values(), &[0.0, 1.0, 1.0, 2.0]);
        let upper = QuboInstance::new(2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(energies(&upper).values(), &[0.0, 0.0, 0.0, 1.0]);
        // Big-endian: variable 0 is the high bit.
        let first = QuboInstance::new(2, vec![-3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(energies(&first).values(), &[0.0, 0.0, -3.0, -3.0]);
    }

    #[test]
    fn incremental_table_matches_naive_sum() {
        for (dist, seed) in [(QuboDistribution::UniformInt, 1), (QuboDistribution::StdNormal, 2)] {
            let inst = sample_instance(dist, 8, seed).unwrap();
            let table = energies(&inst);
            assert_eq!(table.get(0), 0.0);
            for j in 0..256 {
                assert!((table.get(j) - naive_energy(&inst, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampling_properties() {
        let a = sample_instance(QuboDistribution::UniformInt, 12, 5).unwrap();
        let b = sample_instance(QuboDistribution::UniformInt, 12, 5).unwrap();
        assert_eq!(a, b);
        assert!(a
            .matrix()
            .iter()
            .all(|&v| v.fract() == 0.0 && (-10.0..=10.0).contains(&v)));
        assert!(a.matrix().contains(&10.0) && a.matrix().contains(&-10.0));
        assert!(sample_instance(QuboDistribution::UniformInt, 25, 5).is_err());
    }

    #[test]
    fn normal_sample_mean() {
        // 1000 × 1000 = 10⁶ entries.
        let inst = sample_instance(QuboDistribution::StdNormal, 1000, 3);
        // n = 1000 is beyond the simulator guard; draw through the same stream directly.
        assert!(inst.is_err());
        let mut r = rng::stream(3, "qubo.instance");
        let mean: f64 = (0..1_000_000).map(|_| r.sample::<f64, _>(StandardNormal)).sum::<f64>() / 1e6;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn expectation_examples() {
        let inst = QuboInstance::new(2, vec![1.0, 2.0, -4.0, 3.0]).unwrap();
        let table = energies(&inst);
        for j in 0..4 {
            let e = energy_expectation(&table, &StateVector::basis(4, j)).unwrap();
            assert_eq!(e, table.get(j));
        }
        let uniform = StateVector::from_amplitudes(vec![C64::new(0.5, 0.0); 4]).unwrap();
        let mean = table.values().iter().sum::<f64>() / 4.0;
        assert!((energy_expectation(&table, &uniform).unwrap() - mean).abs() < 1e-15);
        assert!(energy_expectation(&table, &StateVector::basis(8, 0)).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let zero = pairwise_expectations(&StateVector::basis(8, 0), 3).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let ones = pairwise_expectations(&StateVector::basis(8, 7), 3).unwrap();
        assert!(ones.iter().all(|&v| v == 1.0));
        // |100⟩: only variable 0 is set.
        let m = pairwise_expectations(&StateVector::basis(8, 4), 3).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(m.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn brute_force_examples() {
        let t = EnergyTable {
            n: 2,
            e: vec![0.0, 1.0, 1.0, 2.0],
        };
        assert_eq!(brute_force_min(&t), (0.0, 0));
        let t = EnergyTable {
            n: 2,
            e: vec![0.0, -1.0, 3.0, -1.0],
        };
        assert_eq!(brute_force_min(&t), (-1.0, 1));
    }

    #[test]
    fn gap_examples() {
        assert_eq!(optimality_gap(-7.0, -7.0).unwrap(), 0.0);
        assert!((optimality_gap(-98.0, -100.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(optimality_gap(1.0, 0.0), Err(InnError::GapUndefined)));
    }

    #[test]
    fn single_bit_problems() {
        let neg = QuboInstance::new(1, vec![-5.0]).unwrap();
        let sol = solve(&neg, &SolveConfig::default()).unwrap();
        assert_eq!((sol.j_sol, sol.energy), (1, -5.0));
        let pos = QuboInstance::new(1, vec![5.0]).unwrap();
        let sol = solve(&pos, &SolveConfig::default()).unwrap();
        assert_eq!((sol.j_sol, sol.energy), (0, 0.0));
        assert_eq!(sol.history.len(), 201);
    }

    #[test]
    fn expectation_bounded_by_ground_energy() {
        let inst = sample_instance(QuboDistribution::StdNormal, 6, 9).unwrap();
        let table = energies(&inst);
        let (e_min, _) = brute_force_min(&table);
        let sol = solve(
            &inst,
            &SolveConfig {
                epochs: 40,
                ..Default::default()
            },
        )
        .unwrap();
        for e in &sol.history {
            assert!(*e >= e_min - 1e-9);
        }
        assert!(sol.final_expectation >= e_min - 1e-9);
    }

    #[test]
    fn csv_layout() {
        let row = BenchRow {
            instance_id: 3,
            seed: 42,
            n: 4,
            e_min: -12.0,
            e_sol: -11.5,
            exact_hit: false,
            gap_percent: Some(4.166666666666666),
            epochs: 201,
            wall_ms: 17,
        };
        let mut out = Vec::new();
        write_bench_csv(std::slice::from_ref(&row), &mut out, false).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            format!("{BENCH_CSV_HEADER}\n3,42,4,-12,-11.5,0,4.166666666666666,201,0\n")
        );
        let mut out = Vec::new();
        write_bench_csv(
            &[BenchRow {
                gap_percent: None,
                ..row
            }],
            &mut out,
            true,
        )
        .unwrap();
        assert!(String::from_utf8(out).unwrap().ends_with(",0,,201,17\n"));
    }
}
