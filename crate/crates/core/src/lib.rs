//! Numerical core for sampling spherical mixed p-spin glasses at high temperature.
//!
//! Everything here is `no_std` with `alloc`; file formats, parallel drivers and the command
//! line live in the `spinglass` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is how inputs reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod advice;
pub mod dynamics;
pub mod error;
pub mod functional;
pub mod hamiltonian;
pub mod localization;
pub mod mixture;
pub mod optim;
pub mod rmt;
pub mod tap;

pub use error::{Error, Result};
pub use hamiltonian::{overlap, Frame, Hamiltonian, SphereState};
pub use mixture::{classify, thresholds, MixtureFunction, Part, RegimeReport, Thresholds};
