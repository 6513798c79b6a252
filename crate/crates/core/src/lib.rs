//! Channel characterization, interference analysis and symbol detection for a
//! 2x2 molecular MIMO link with diffusion-based propagation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! computation over explicit inputs and explicitly seeded random streams;
//! file formats, configuration, the CLI and parallel drivers live in the
//! companion `molmimo` crate.
//!
//! Layout:
//!
//! - [`topology`]: geometry of the two point transmitters and the two
//!   absorbing receiver bulges.
//! - [`particle_sim`]: Brownian-motion Monte Carlo producing first-hitting
//!   records and empirical CDFs per link.
//! - [`channel_model`] and [`fit`]: closed-form and fitted hitting-probability
//!   models, slot taps and SIR.
//! - [`analysis`]: interference moments, Gaussian approximations of the
//!   detector outputs and MAP thresholds.
//! - [`link_sim`]: slot-level link simulation, the four detectors and BER
//!   measurement.
#![no_std]
// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
// Test oracles keep published and high-precision digits verbatim.
#![cfg_attr(test, allow(clippy::approx_constant, clippy::excessive_precision))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod channel_model;
mod error;
pub mod fit;
pub mod link_sim;
pub mod particle_sim;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
