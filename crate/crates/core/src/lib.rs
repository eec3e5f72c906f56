//! Simulation and analysis of all-optical phase modulation of a weak signal
//! by a strong control field in a warm three-level ladder vapour.
//!
//! The crate is organized bottom-up:
//!
//! - [`atoms`]: ladder constants, vapour-cell state, thermal velocity grids.
//! - [`steadystate`]: CW weak-probe susceptibility, Doppler averaging,
//!   transmission/phase spectra and operating-window search.
//! - [`obe`]: time-resolved three-level optical Bloch equations.
//! - [`interferometer`]: Franson-interferometer forward model and detector traces.
//! - [`analysis`]: calibration and inversion of detector voltages.
//! - [`scan`]: end-to-end virtual experiments and parameter sweeps.
//! - [`config`] and [`cli`]: file-driven front-end used by the `ladder-phase` binary.

// `!(x > 0.0)` guards are written that way on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atoms;
pub mod cli;
pub mod config;
pub mod constants;
pub mod error;
pub mod interferometer;
pub mod obe;
pub mod scan;
pub mod steadystate;

pub use error::{Error, Result};
