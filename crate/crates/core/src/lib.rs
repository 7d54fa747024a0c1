//! Physics-aware multifidelity Bayesian optimization.
//!
//! * [`mfgp`]: recursive autoregressive multifidelity Gaussian process.
//! * [`acquisition`]: multifidelity expected improvement with a pluggable
//!   physics-aware bias.
//! * [`optimizer`]: Latin hypercube initialization and the budgeted
//!   sequential loop (EGO, MFBO, PA-MFBO).
//! * [`problems`]: synthetic multifidelity benchmarks and discrepancy metrics.

pub mod acquisition;
pub mod mfgp;
pub mod optimizer;
pub mod problems;

mod linalg;
mod sequence;
mod simplex;

pub use linalg::{JITTER_MAX, JITTER_START};
