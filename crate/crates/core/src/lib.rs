//! Desk-scale laboratory for driven Bose-Hubbard chains of gmon qubits.
//!
//! The crate enumerates truncated Fock spaces, evolves random pulse
//! instances with fixed-step RK4, and scores the output distributions with
//! Porter-Thomas, cross-entropy, entanglement and correlation probes. Two
//! independent amplitude oracles (free-fermion determinants and Trotter path
//! sums) validate the simulator, and the `gmon` and `waveform` modules hold
//! the circuit model and control-line calibration math.

pub mod bose_hubbard;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod fock_basis;
pub mod gmon;
pub mod integrator;
pub mod numeric;
pub mod oracles;
pub mod pipeline;
pub mod rng;
pub mod waveform;

pub use error::{Error, Result};
