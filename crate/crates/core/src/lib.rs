//! Transmission spectroscopy of a microwave resonator collectively coupled to
//! a disordered ensemble of three-junction flux qubits.
//!
//! The pipeline runs bottom-up:
//!
//! * [`circuit`] diagonalizes the three-junction circuit in the charge basis and
//!   tabulates tunneling energy and persistent current over junction-area ratios.
//! * [`ensemble`] draws a seeded, order-independent ensemble of qubits from
//!   Gaussian junction-area and flux disorder.
//! * [`spectroscopy`] evaluates the dispersive shift, thermal broadening and the
//!   transmitted intensity (dispersive Lorentzian or exact linear response).
//! * [`fitting`] extracts Lorentzian parameters and drive-amplitude profiles.
//! * [`scenario`] bundles everything into validated, serializable run configs.
//!
//! All frequencies are ordinary frequencies (the value of ω/2π). Qubit and
//! resonator frequencies are in GHz, couplings and linewidths in MHz,
//! temperatures in mK and flux offsets in µΦ₀ from the degeneracy point.

pub mod circuit;
pub mod ensemble;
pub mod error;
pub mod fitting;
pub mod io;
pub mod par;
pub mod scenario;
pub mod spectroscopy;
pub mod sum;
pub mod units;

pub use error::{Error, ErrorCategory, Result};
