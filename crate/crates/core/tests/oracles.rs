//! Forward passes, QUBO tables and metrics against independent oracles:
//! dense matrices, direct sums and linear scans.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use inn::classify::MetricsReport;
use inn::model::{sequence_forward, BlockParams, InputEncoding, Network, NetworkArch, SequenceParams};
use inn::qubo::{brute_force_min, energies, sample_instance, QuboDistribution};
use inn::rng;
use inn::selftest::naive_dft;
use inn::tensor::{amplitude_encode, dft_apply, StateVector, C64};

fn dense_dft(d: usize) -> DMatrix<C64> {
    let s = 1.0 / (d as f64).sqrt();
    DMatrix::from_fn(d, d, |k, j| {
        C64::from_polar(s, 2.0 * PI * ((k * j) % d) as f64 / d as f64)
    })
}

/// `p` of `(F U(φ^L)) ⋯ (F U(φ^1)) F |x⟩` with every factor a dense matrix.
fn dense_prob(d: usize, depth: usize, phases: &[f64], x: &[f64]) -> f64 {
    let f = dense_dft(d);
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut psi = DVector::from_iterator(d, x.iter().map(|&v| C64::new(v / norm, 0.0)));
    psi = &f * psi;
    for l in 0..depth {
        let u = DMatrix::from_diagonal(&DVector::from_iterator(
            d,
            phases[l * d..(l + 1) * d].iter().map(|&a| C64::from_polar(1.0, a)),
        ));
        psi = &f * (u * psi);
    }
    psi[0].norm_sqr()
}

fn random_phases(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "oracle.phases");
    (0..n).map(|_| r.random_range(-PI..PI)).collect()
}

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "oracle.x");
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[test]
fn dft_matches_direct_sum_up_to_1024() {
    let mut r = rng::stream(3, "oracle.dft");
    for d in [1, 2, 3, 4, 5, 7, 12, 64, 100, 127, 256, 400, 500, 1000, 1024] {
        let amps: Vec<C64> = (0..d)
            .map(|_| C64::new(r.sample(StandardNormal), r.sample(StandardNormal)))
            .collect();
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let psi = StateVector::from_amplitudes(amps.iter().map(|z| z / norm).collect()).unwrap();
        let fast = dft_apply(&psi);
        let slow = naive_dft(psi.amplitudes());
        let err = fast
            .amplitudes()
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "d={d}: {err:e}");
    }
}

#[test]
fn sequence_matches_dense_product() {
    let (d, depth) = (8, 3);
    for seed in 0..20 {
        let phases = random_phases(d * depth, seed);
        let x = random_input(d, seed);
        let seq = SequenceParams::from_phases(d, depth, phases.clone()).unwrap();
        let (_, p) = sequence_forward(&seq, &amplitude_encode(&x).unwrap()).unwrap();
        let want = dense_prob(d, depth, &phases, &x);
        assert!((p - want).abs() <= 1e-12, "seed {seed}: {p} vs {want}");
    }
}

#[test]
fn network_matches_composed_dense_blocks() {
    let arch = NetworkArch::new(vec![12, 6, 3], vec![2, 3]).unwrap();
    let mut blocks = Vec::new();
    let mut all_phases = Vec::new();
    for m in 0..2 {
        let (d_in, d_out, depth) = (arch.dims()[m], arch.dims()[m + 1], arch.depths()[m]);
        let seqs: Vec<SequenceParams> = (0..d_out)
            .map(|t| {
                let ph = random_phases(d_in * depth, (m * 100 + t) as u64);
                all_phases.push(ph.clone());
                SequenceParams::from_phases(d_in, depth, ph).unwrap()
            })
            .collect();
        blocks.push(BlockParams::from_sequences(seqs).unwrap());
    }
    let net = Network::from_blocks(arch.clone(), blocks).unwrap();
    for seed in 0..5 {
        let x = random_input(12, 50 + seed);
        let got = net.forward(&x, InputEncoding::Strict).unwrap();
        let mut h = x.clone();
        let mut k = 0;
        for m in 0..2 {
            let (d_in, d_out, depth) = (arch.dims()[m], arch.dims()[m + 1], arch.depths()[m]);
            h = (0..d_out)
                .map(|t| dense_prob(d_in, depth, &all_phases[k + t], &h))
                .collect();
            k += d_out;
        }
        for (a, b) in got.iter().zip(&h) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn energy_table_and_minimum_match_linear_scan() {
    for (i, dist) in [QuboDistribution::UniformInt, QuboDistribution::StdNormal]
        .into_iter()
        .enumerate()
    {
        let inst = sample_instance(dist, 12, 40 + i as u64).unwrap();
        let n = inst.n();
        let table = energies(&inst);
        let mut best = (f64::INFINITY, 0);
        for j in 0..1usize << n {
            // Variable μ is bit n-1-μ of the basis index.
            let x: Vec<f64> = (0..n).map(|mu| ((j >> (n - 1 - mu)) & 1) as f64).collect();
            let mut e = 0.0;
            for mu in 0..n {
                for nu in 0..n {
                    e += inst.q(mu, nu) * x[mu] * x[nu];
                }
            }
            assert!((table.get(j) - e).abs() <= 1e-9 * e.abs().max(1.0), "j={j}");
            if e < best.0 {
                best = (e, j);
            }
        }
        let (e_min, j_min) = brute_force_min(&table);
        assert_eq!(j_min, best.1);
        assert!((e_min - best.0).abs() <= 1e-9 * best.0.abs().max(1.0));
    }
}

#[test]
fn f1_matches_one_vs_rest_counts() {
    let mut r = rng::stream(8, "oracle.f1");
    let classes = 4;
    let actual: Vec<usize> = (0..500).map(|_| r.random_range(0..classes)).collect();
    let predicted: Vec<usize> = actual
        .iter()
        .map(|&a| {
            if r.random_bool(0.7) {
                a
            } else {
                r.random_range(0..classes)
            }
        })
        .collect();
    let rep = MetricsReport::from_predictions(&actual, &predicted, classes).unwrap();
    let mut f1s = Vec::new();
    for c in 0..classes {
        let tp = actual
            .iter()
            .zip(&predicted)
            .filter(|&(&a, &p)| a == c && p == c)
            .count() as f64;
        let fp = actual
            .iter()
            .zip(&predicted)
            .filter(|&(&a, &p)| a != c && p == c)
            .count() as f64;
        let fn_ = actual
            .iter()
            .zip(&predicted)
            .filter(|&(&a, &p)| a == c && p != c)
            .count() as f64;
        let f1 = 2.0 * tp / (2.0 * tp + fp + fn_);
        assert!((rep.f1[c] - f1).abs() <= 1e-12);
        f1s.push(f1);
    }
    let acc = actual.iter().zip(&predicted).filter(|(a, p)| a == p).count() as f64 / 500.0;
    assert!((rep.accuracy - acc).abs() <= 1e-12);
    assert!((rep.avg_f1 - f1s.iter().sum::<f64>() / classes as f64).abs() <= 1e-12);
}
