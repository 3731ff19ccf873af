//! Signed-power ("NL") gradient optimizers and the tooling needed to study them.
//!
//! The crate is `no_std` with `alloc`; everything here is pure computation.
//! File formats, the record store and the command-line driver live in the
//! `nlgrad` companion crate.
//!
//! - [`tensor`]: dense row-major `f64` tensors and the seeded [`RngStream`].
//! - [`transform`]: the signed-power map `sign(x)|x|^ν`, clipping and sign.
//! - [`optim`]: NL-SGD, NL-Momentum, NL-NAG and the baseline optimizers.
//! - [`problems`]: Quadratic Deep, the one- and two-layer toy models, a
//!   correlated-input dataset and a small MLP classifier.
//! - [`snr`]: node signal-to-noise ratio and matched-filter optimal weights.
//! - [`train`]: schedules, the epoch loop and multi-seed repeats.
//! - [`search`]: random hyperparameter search and grid sweeps.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod floats;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod search;
pub mod snr;
pub mod tensor;
pub mod train;
pub mod transform;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use tensor::Tensor;
