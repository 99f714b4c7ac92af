//! Core library for superconducting transmon-qudit experiments.
//!
//! The crate covers the five analysis stages used when operating a transmon
//! as a multi-level qudit dispersively coupled to a readout cavity:
//!
//! * [`transmon`] — charge-basis diagonalization of the transmon Hamiltonian,
//!   charge matrix elements, and charge-dispersion curves.
//! * [`cavity`] — the transmon⊗cavity product system, ladder classification
//!   of dressed states, dispersive shifts, and device-parameter refinement.
//! * [`decay`] — multi-level population rate equations, exact propagation,
//!   and sequential-iterative rate fitting.
//! * [`readout`] — multi-tone cavity transmission, population inversion, and
//!   the finite-readout-time decay correction.
//! * [`ramsey`] — Ramsey fringe synthesis, background removal, periodogram
//!   peak finding, and time-domain fringe fitting.
//!
//! Frequencies are in GHz and times in µs unless a name says otherwise
//! (`_mhz`, `_khz`). Rates are in µs⁻¹. The product GHz·µs is 10³, so code
//! that multiplies a frequency by a time converts explicitly; the [`ramsey`]
//! module works in MHz and µs, where the product is dimensionless.

pub mod cavity;
pub mod decay;
mod error;
pub mod fit;
mod linalg;
pub mod ramsey;
pub mod readout;
pub mod transmon;

pub use error::{Error, Result};
