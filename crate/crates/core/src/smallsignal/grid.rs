//! Network Jacobian transfer matrices mapping `(Δθ, ΔU/U)` to `(ΔP, ΔQ)` injected
//! into the network.
//!
//! With `B` the grounded Laplacian and `M_ij = U_iU_jB_ij·cos θ_ij`,
//! `N_ij = U_iU_jB_ij·sin θ_ij`:
//!
//! ```text
//! J_Pθ =  αM + βN − diag(Q)      J_PU =  βM − αN + diag(P)
//! J_Qθ = −βM + αN + diag(P)      J_QU =  αM + βN + diag(Q)
//! ```
//!
//! This is the admittance-matrix form with `B → −B`; at `n = 1` it is the
//! single-line Jacobian.

use faer::Mat;

use super::rational::RationalFn;
use super::transfer::TransferMatrix;
use super::vsc::NetworkFrequencyCoeffs;
use crate::network::{OperatingPoint, SusceptanceMatrix};
use crate::{Error, Result};

/// Single line of susceptance `b` to the infinite bus.
pub fn grid_jacobian_single(b: f64, u: f64, p: f64, q: f64, c: &NetworkFrequencyCoeffs) -> TransferMatrix {
    let bu = b * u * u;
    let (a, be) = (c.alpha.scale(bu), c.beta.scale(bu));
    let k = RationalFn::constant;
    TransferMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => &a - &k(q),
        (0, 1) => &be + &k(p),
        (1, 0) => &(-&be) + &k(p),
        _ => &a + &k(q),
    })
}

/// `(M, N)` at the operating point; `N = 0` when angles are flat.
pub fn coupling_matrices(b: &SusceptanceMatrix, op: &OperatingPoint) -> (Mat<f64>, Mat<f64>) {
    let n = b.n();
    let th = op.angles();
    let m = Mat::from_fn(n, n, |i, j| op.u[i] * op.u[j] * b.get(i, j) * (th[i] - th[j]).cos());
    let nn = Mat::from_fn(n, n, |i, j| op.u[i] * op.u[j] * b.get(i, j) * (th[i] - th[j]).sin());
    (m, nn)
}

/// Checks dimensions and, when angles are given, the power-balance residual.
pub fn check_operating_point(b: &SusceptanceMatrix, op: &OperatingPoint) -> Result<()> {
    op.validate(b.n())?;
    let r = op.balance_residual(b);
    if r > 1e-6 {
        return Err(Error::InconsistentOperatingPoint(format!("power-balance residual {r:.3e} exceeds 1e-6")));
    }
    Ok(())
}

pub fn grid_jacobian_multi(
    b: &SusceptanceMatrix,
    op: &OperatingPoint,
    include_n: bool,
    c: &NetworkFrequencyCoeffs,
) -> Result<TransferMatrix> {
    check_operating_point(b, op)?;
    let n = b.n();
    let (m, nn) = coupling_matrices(b, op);
    let nv = |i: usize, j: usize| if include_n { nn[(i, j)] } else { 0.0 };
    let k = RationalFn::constant;
    let lin = |x: f64, y: f64| &c.alpha.scale(x) + &c.beta.scale(y);
    Ok(TransferMatrix::from_fn(2 * n, 2 * n, |r, col| {
        let (i, j) = (r % n, col % n);
        let (mij, nij) = (m[(i, j)], nv(i, j));
        let diag = |v: f64| if i == j { v } else { 0.0 };
        match (r < n, col < n) {
            (true, true) => &lin(mij, nij) - &k(diag(op.q[i])),
            (true, false) => &lin(-nij, mij) + &k(diag(op.p[i])),
            (false, true) => &lin(nij, -mij) + &k(diag(op.p[i])),
            (false, false) => &lin(mij, nij) + &k(diag(op.q[i])),
        }
    }))
}
