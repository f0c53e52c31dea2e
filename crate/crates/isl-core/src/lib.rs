//! Numerical laboratory for time-dependent inverse scattering.
//!
//! Split-step and Crank–Nicolson propagators, high-velocity scattering probes, X-ray
//! transform inversion, Aharonov–Bohm flux and field recovery, and small-amplitude
//! nonlinear Schrödinger inversion on the line.

pub mod aharonov_bohm;
pub mod catalog;
pub mod error;
pub mod field;
pub mod fit;
pub mod linalg;
pub mod nls_inverse;
pub mod propagators;
pub mod radon;
pub mod scattering;

pub use error::{Error, Result};
