//! Simulation library for a cross-Kerr interferometric quantum-state converter
//! and the protocols built on top of it.
//!
//! The device maps single-mode states truncated at photon number `N` onto
//! (`N`+1)-mode states carrying exactly one photon, where arbitrary unitaries
//! are cheap (beam splitter arrays) and detection only needs ON/OFF detectors.
//! On that substrate the crate implements four protocol families:
//!
//! - [`converter`] — forward/backward state conversion, conditional and
//!   unconditional (feed-forward / repeat-until-success) variants;
//! - [`engineering`] — realizing arbitrary (also non-unitary) operators on
//!   single-mode states via two converters and beam splitter arrays;
//! - [`measurement`] — overlap probes, expectation values, Fock matrix-element
//!   extraction and experimental diagonalization of an unknown state;
//! - [`telemanip`] — teleportation combined with in-transit state engineering,
//!   including the classical feed-forward channel.
//!
//! Supporting layers: [`fock`] (truncated Fock spaces, states, partial trace,
//! the single-mode/multimode isomorphism), [`optics`] (circuit elements, mesh
//! synthesis, polar decomposition), [`linalg`] (dense complex linear algebra)
//! and [`oracle`] (brute-force circuit simulation with explicit ancilla modes,
//! used to cross-check every fast-path result).
//!
//! ```
//! use kerrconv_core::converter::{convert_a_to_b, ConverterConfig};
//! use kerrconv_core::fock::{QuantumState, StateVector};
//! use kerrconv_core::C64;
//! use ndarray::array;
//!
//! // N = 1 device with phase-state detection: success probability 1/2,
//! // and the surviving channel state is the image of the input.
//! let cfg = ConverterConfig::canonical(1, 0.0);
//! let s = 1.0 / 2f64.sqrt();
//! let input = QuantumState::Pure(
//!     StateVector::new(cfg.source_space(), array![C64::new(s, 0.0), C64::new(s, 0.0)])?,
//! );
//! let outcome = convert_a_to_b(&input, &cfg)?;
//! assert!((outcome.probability - 0.5).abs() < 1e-12);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod converter;
pub mod engineering;
pub mod fock;
pub mod linalg;
pub mod measurement;
pub mod optics;
pub mod oracle;
pub mod telemanip;

pub use converter::{ConverterConfig, DetectionTarget, OutcomeLabel, OutcomeRecord, TrialStats};
pub use fock::{
    DensityOperator, FockError, FockSpace, IsomorphismMap, Mode, QuantumState, StateVector,
};
pub use optics::{
    BeamSplitterElement, CircuitElement, CrossKerrElement, MeshDecomposition, MultiportUnitary,
    PhaseShifterElement, PolarFactors,
};

/// Complex double-precision scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
