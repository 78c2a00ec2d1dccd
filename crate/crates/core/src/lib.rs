//! Simulation of a single trapped two-level atom driven by short resonant
//! pulses: optical Bloch dynamics, quantum-jump photon emission, detection
//! and Hanbury Brown–Twiss correlation, and Raman spectroscopy of the ground
//! hyperfine qubit.

pub mod bloch;
pub mod constants;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mcwf;
pub mod raman;
pub mod rng;

pub use error::{Error, Result};
