//! Interferometric neural networks.
//!
//! An interferometric neural network (INN) is built only from beamsplitters
//! (unitary discrete Fourier transforms) and phase shifters (diagonal
//! unitaries holding every trainable parameter). This crate simulates INNs
//! on complex state vectors, differentiates them analytically, and trains
//! them on three kinds of problem:
//!
//! * [`qubo`]: variational minimization of quadratic binary objectives;
//! * [`classify`]: binary and multiclass image classification;
//! * [`igan`]: adversarial image generation with INN generator and
//!   discriminator.
//!
//! The lower layers are [`tensor`] (state vectors, `F`, `U(φ)`),
//! [`model`] (sequences, blocks, networks), [`autodiff`] (reverse-mode
//! gradients) and [`optim`] (Adam, initialization). [`datasets`] reads IDX
//! and PGM/PPM files.

pub mod autodiff;
pub mod classify;
pub mod datasets;
pub mod error;
pub mod igan;
pub mod loss;
pub mod model;
pub mod optim;
pub mod qubo;
pub mod report;
pub mod rng;
pub mod selftest;
pub mod tensor;

pub use error::{InnError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/interferometers.md")]
    mod interferometers {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/gradients.md")]
    mod gradients {}
    #[doc = include_str!("../../../book/src/qubo.md")]
    mod qubo {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/gan.md")]
    mod gan {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
