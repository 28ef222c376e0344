//! Grid-strength indices (gSCR, OgSCR) for grids hosting many converters, and the
//! small-signal mode analysis used to check them.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`] builds the grounded nodal susceptance matrix and the weighted
//!   extended Jacobians `J_eq` / `J_eqo`.
//! * [`strength`] does the weighted symmetric eigen-analysis: indices, participation
//!   factors and closed-form sensitivities.
//! * [`smallsignal`] holds rational transfer-function algebra, converter and network
//!   Jacobians, characteristic equations and a polynomial eigenvalue solver.
//! * [`studies`] drives critical-SCR searches, sweeps, decoupling checks and
//!   stability verdicts.

pub mod assign;
pub mod error;
pub mod network;
pub mod par;
pub mod reference;
pub mod smallsignal;
pub mod strength;
pub mod studies;

pub use error::{Error, Result};
pub use num_complex::Complex64;
