//! Small-signal models: rational transfer functions, converter and network
//! Jacobians, characteristic equations and their roots.

pub mod characteristic;
pub mod grid;
pub mod poly;
pub mod polyeig;
pub mod rational;
pub mod transfer;
pub mod vsc;

pub use characteristic::{
    decouple, frobenius_check, mpeis_char_matrix, mpeis_modes, mpeis_transfer_matrix, scr_quadratic_coeffs,
    svis_char_poly, svis_modes, EquivalentSvis, FrobeniusReport, NetworkModel, Pathway, SvisPolynomial, SvisResult,
};
pub use grid::{grid_jacobian_multi, grid_jacobian_single};
pub use poly::Poly;
pub use polyeig::{poly_eigs, poly_eigs_with, Mode, ModeSet, PolyEigOptions, Provenance};
pub use rational::RationalFn;
pub use transfer::{MatrixPolynomial, TransferMatrix};
pub use vsc::{vsc_admittance, vsc_jacobian, ControlMode, DeviceModel, NetworkFrequencyCoeffs, PiGains, VscAdmittance};
