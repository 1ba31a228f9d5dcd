//! Bearing fault diagnosis with a multi-size-kernel adaptive 1D CNN.
//!
//! The crate covers the layer library ([`nn`]), signal ingestion and
//! synthesis ([`signal`]), network design and serialization ([`arch`]),
//! training and evaluation ([`train`]) and the streaming monitor
//! ([`monitor`]). The `bearing-diag` binary wraps all of it.

pub mod arch;
pub mod cli;
pub mod error;
pub mod monitor;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
