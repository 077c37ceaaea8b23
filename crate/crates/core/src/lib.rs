//! Open-system quantum-walk compiler and simulator.
//!
//! A circuit (gates, single-qubit channels, trailing partial traces) is lowered
//! to a tight-binding scattering graph whose wires carry density-matrix
//! elements. A walker injected at momentum `k = π/4` on the `|0…0⟩⟨0…0|` wire
//! leaves the graph with amplitudes equal to the final density matrix, and the
//! probability that stays on the graph equals the purity of that state.
//!
//! Module map:
//!
//! * [`circuit`] – circuit IR, text format, validation, Kraus → 4×4 superoperator.
//! * [`synth`] / [`ring`] – exact Clifford+T synthesis into the widget gate set.
//! * [`channel`] – SVD channel plans (pre-unitary, damping values, rescale, post-unitary).
//! * [`widget`] – widget graphs, lead-eliminated S-matrix solver, widget catalog.
//! * [`compile`] – circuit → full scattering graph, resource accounting, DOT export.
//! * [`scatter`] – frequency- and time-domain solves plus physical readouts.
//! * [`oracle`] – dense density-matrix reference simulator.
//! * [`report`] – deterministic JSON run reports.

pub mod channel;
pub mod circuit;
pub mod compile;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod ring;
pub mod scatter;
pub mod synth;
pub mod widget;

pub use error::{Error, Result};
pub use linalg::C64;

/// Operating momentum of the walker.
pub const K_OPERATING: f64 = std::f64::consts::FRAC_PI_4;
