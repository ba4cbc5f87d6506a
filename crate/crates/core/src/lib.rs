//! Boltzmann echoes of two coupled quantum kicked rotators.
//!
//! Particle 1 is evolved forward and then imperfectly time-reversed while
//! particle 2, coupled to it, is not; the echo is the overlap of particle 1's
//! reduced state with its initial state. The crate provides exact Floquet
//! propagation on the torus, initial-state preparation, ensemble echo
//! curves, classical standard-map rate estimates and decay-law fitting.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod classical;
pub mod echo;
pub mod error;
pub mod state_prep;
pub mod torus;

pub use error::{EchoError, Result};
