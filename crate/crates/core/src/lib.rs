//! Universal interactive Wyner-Ziv quantization of Gaussian sources.
//!
//! An encoder holding `x` and a decoder holding correlated side information
//! `y` agree on a reconstruction within a target distortion without knowing
//! the noise variance between them. The encoder conveys the auxiliary in
//! parts, one per round, each part quantized by a multilevel polar code over
//! the lattice `2^(-t/4) Z`. After every round the decoder runs a closeness
//! test against a random-projection hash of `x` and answers ACK or NACK.
//!
//! ```
//! use polarwz::model::{make_schedule, round_params, SourceParams};
//!
//! let src = SourceParams::codec(4.0, 1.0)?;
//! let sched = make_schedule(1.5, 3.0, 0.5)?;
//! let rp = round_params(1, &sched, &src)?;
//! assert_eq!(rp.sigma_k2, 3.0);
//! assert!((rp.delta_k - 1.5).abs() < 1e-12);
//! # Ok::<(), polarwz::Error>(())
//! ```
//!
//! Modules, bottom up:
//!
//! - [`model`]: source statistics, guess schedules and per-round scalars.
//! - [`lattice`]: the lattice, the discrete Gaussian and level likelihoods.
//! - [`polar`]: transform, successive cancellation, code construction and
//!   the covering encoder / packing decoder.
//! - [`hashtest`]: quantized random projections and the closeness test.
//! - [`protocol`]: the round-based session.
//! - [`harness`]: configuration, code cache, experiments and verification.

// `!(x > 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod hashtest;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod polar;
pub mod protocol;

pub use error::{Error, Result};

/// Mixes a base seed with a label into an independent 64-bit seed.
pub fn derive_seed(base: u64, label: u64) -> u64 {
    let mut z = base ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/polar.md")]
    mod polar {}
    #[doc = include_str!("../../../book/src/closeness.md")]
    mod closeness {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
