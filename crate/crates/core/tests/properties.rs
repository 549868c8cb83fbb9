//! Invariants checked over random inputs.

use proptest::prelude::*;

use inn::datasets::{
    batch_iter, encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, Image, Preprocess, RawImages,
};
use inn::model::{block_forward, decode_checkpoint, encode_checkpoint, softmax, Network, NetworkArch};
use inn::optim::{init_network, InitScheme};
use inn::qubo::{brute_force_min, energies, energy_expectation, QuboInstance};
use inn::rng;
use inn::tensor::{dft_adjoint_apply, dft_apply, phase_apply, readout_prob0, PhaseVector, StateVector, C64};

fn state(raw: &[(f64, f64)]) -> Option<StateVector> {
    let amps: Vec<C64> = raw.iter().map(|&(a, b)| C64::new(a, b)).collect();
    let n = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (n > 1e-6).then(|| StateVector::from_amplitudes(amps.into_iter().map(|z| z / n).collect()).unwrap())
}

fn amps() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..80)
}

fn small_net(seed: u64) -> Network {
    let arch = NetworkArch::new(vec![6, 4, 3], vec![2, 2]).unwrap();
    init_network(&arch, InitScheme::UniformPi, &mut rng::stream(seed, "prop.net"))
}

proptest! {
    #[test]
    fn transforms_preserve_norm(raw in amps(), seed in any::<u64>()) {
        let Some(psi) = state(&raw) else { return Ok(()) };
        let f = dft_apply(&psi);
        prop_assert!((f.norm() - 1.0).abs() <= 1e-12);
        let back = dft_adjoint_apply(&f);
        for (a, b) in back.amplitudes().iter().zip(psi.amplitudes()) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        let phases: Vec<f64> = (0..psi.dim()).map(|j| ((seed >> (j % 64)) & 0xff) as f64 * 0.1).collect();
        let shifted = phase_apply(&psi, &PhaseVector::new(phases).unwrap()).unwrap();
        prop_assert!((shifted.norm() - 1.0).abs() <= 1e-12);
        let p = readout_prob0(&f);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
    }

    #[test]
    fn block_output_ignores_input_scale(
        x in prop::collection::vec(-1.0..1.0f64, 6),
        scale in 1e-3..1e3f64,
        seed in any::<u64>(),
    ) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let net = small_net(seed);
        let block = &net.blocks()[0];
        let a = block_forward(block, &x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let b = block_forward(block, &scaled).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(u));
        }
    }

    #[test]
    fn softmax_is_a_distribution(p in prop::collection::vec(0.0..1.0f64, 2..20)) {
        let s = softmax(&p);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(s.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn energy_of_zero_string_is_zero_and_expectation_bounded(
        n in 1usize..8,
        seed in any::<u64>(),
        raw in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 128),
    ) {
        let mut r = rng::stream(seed, "prop.qubo");
        let q: Vec<f64> = (0..n * n).map(|_| rand::Rng::random_range(&mut r, -5.0..5.0)).collect();
        let inst = QuboInstance::new(n, q).unwrap();
        let table = energies(&inst);
        prop_assert_eq!(table.get(0), 0.0);
        let Some(psi) = state(&raw[..1 << n]) else { return Ok(()) };
        let (e_min, _) = brute_force_min(&table);
        let e = energy_expectation(&table, &psi).unwrap();
        prop_assert!(e >= e_min - 1e-9 * e_min.abs().max(1.0));
    }

    #[test]
    fn batches_cover_every_index_once(len in 0usize..300, batch in 1usize..70, seed in any::<u64>(), epoch in 0usize..5) {
        let batches = batch_iter(len, batch, seed, epoch);
        prop_assert_eq!(batches.len(), len.div_ceil(batch));
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
        prop_assert_eq!(batch_iter(len, batch, seed, epoch), batches);
    }

    #[test]
    fn idx_round_trips(h in 1usize..6, w in 1usize..6, count in 0usize..10, seed in any::<u8>()) {
        let pixels: Vec<u8> = (0..h * w * count).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let raw = RawImages { height: h, width: w, pixels };
        prop_assert_eq!(parse_idx_images(&encode_idx_images(&raw)).unwrap(), raw);
        let labels: Vec<u8> = (0..count as u8).map(|i| i % 10).collect();
        prop_assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn preprocessing_stays_in_unit_interval(
        h in 2usize..12,
        w in 2usize..12,
        out in 1usize..10,
        crop in any::<bool>(),
        bytes in prop::collection::vec(any::<u8>(), 144),
    ) {
        let img = Image::from_bytes(h, w, &bytes[..h * w]).unwrap();
        let pre = Preprocess { height: out.min(h), width: out.min(w), crop };
        let v = pre.apply(&img).unwrap();
        prop_assert_eq!(v.len(), pre.height * pre.width);
        prop_assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn checkpoints_round_trip_bitwise(seed in any::<u64>()) {
        let net = small_net(seed);
        let back = decode_checkpoint(&encode_checkpoint(&net)).unwrap();
        let bits = |n: &Network| n.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(back.arch(), net.arch());
        prop_assert_eq!(bits(&back), bits(&net));
    }
}
