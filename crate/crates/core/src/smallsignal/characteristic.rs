//! Characteristic equations: single-infeed polynomials, the multi-infeed matrix
//! polynomial in three network variants, decoupling into equivalent single-infeed
//! systems, and the coupling-term size check.
//!
//! The multi-infeed matrix polynomial avoids clearing `α`, `β` and converter
//! denominators row by row, which would plant spurious roots. Per device it
//! introduces `w1, w2` with `ΔU/U = d11·w1`, `Δθ = d22·w2` (so `Y11·ΔU/U = n11·w1`,
//! `Y22·Δθ = n22·w2`), and the `α/β`-filtered network terms become first-order
//! relations in `σ = s/ω0`. Its determinant is a constant multiple of the product
//! of cleared single-infeed polynomials (under decoupling), with no extra roots.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{check_operating_point, coupling_matrices, grid_jacobian_multi};
use super::poly::Poly;
use super::polyeig::{poly_eigs_with, ModeSet, PolyEigOptions, Provenance};
use super::transfer::{MatrixPolynomial, TransferMatrix};
use super::vsc::{vsc_admittance, vsc_jacobian, DeviceModel, NetworkFrequencyCoeffs};
use crate::network::{extended_jacobian, operation_jacobian, OperatingPoint, System, Weighting, GROUND};
use crate::par::{self, Exec};
use crate::strength::weighted_eigensystem;
use crate::{Error, Result};

/// Converter admittance split into numerator and denominator polynomials.
#[derive(Debug, Clone)]
struct DevicePolys {
    n11: Poly,
    d11: Poly,
    n22: Poly,
    d22: Poly,
}

impl DevicePolys {
    fn new(model: &DeviceModel, u: f64) -> Result<Self> {
        let y = vsc_admittance(model, u)?;
        Ok(DevicePolys {
            n11: y.y11.num().clone(),
            d11: y.y11.den().clone(),
            n22: y.y22.num().clone(),
            d22: y.y22.den().clone(),
        })
    }

    /// Degree of the cleared single-infeed polynomial for nonzero power and `λ`.
    fn svis_degree(&self) -> usize {
        let (a, b, c, d) = (self.n11.degree(), self.d11.degree(), self.n22.degree(), self.d22.degree());
        (b + d).max(1 + a + d).max(1 + c + b).max(2 + a + c)
    }
}

/// `(a(s), b(s))` such that `SCR² + a·SCR + b = 0` at a closed-loop mode of the
/// single-infeed system.
pub fn scr_quadratic_coeffs(
    model: &DeviceModel,
    p_b: f64,
    q_b: f64,
    u: f64,
    s: Complex64,
) -> Result<(Complex64, Complex64)> {
    let g = vsc_jacobian(model, p_b, q_b, u)?.eval(s)?;
    let c = NetworkFrequencyCoeffs::new(model.omega0());
    let (al, be) = (c.alpha.eval(s)?, c.beta.eval(s)?);
    let (gpt, gpu, gqt, gqu) = (g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
    let k = al * al + be * be;
    if k.norm() <= 1e-300 {
        return Err(Error::PoleEvaluation(s));
    }
    let a = (-al * (gpt + gqu) + be * (gqt - gpu)) / (k * u * u);
    let b = (gpt * gqu - gpu * gqt + (gqu - gpt) * q_b + (gpu + gqt) * p_b - p_b * p_b - q_b * q_b) / (k * u.powi(4));
    Ok((a, b))
}

/// Denominator-cleared single-infeed characteristic polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvisPolynomial {
    pub poly: Poly,
    /// `d11·d22·(s² + ω0²)`, the factor multiplied in while clearing.
    pub cleared: Poly,
}

/// `λ²U²ω0²·d11·d22 − λUP_bω0·s·(n11·d22 + n22·d11) + P_b²·n11·n22·(s² + ω0²)`,
/// i.e. the `2×2` determinant with grid strength `λ` times `(s²+ω0²)·d11·d22/U²`.
pub fn svis_char_poly(model: &DeviceModel, p_b: f64, u: f64, lambda: f64) -> Result<SvisPolynomial> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Validation(format!("λ must be positive, got {lambda}")));
    }
    let dp = DevicePolys::new(model, u)?;
    let w0 = model.omega0();
    let q = Poly::new(vec![w0 * w0, 0.0, 1.0]);
    let t1 = (&dp.d11 * &dp.d22).scale(lambda * lambda * u * u * w0 * w0);
    let t2 = (&(&dp.n11 * &dp.d22) + &(&dp.n22 * &dp.d11)).mul_s_pow(1).scale(lambda * u * p_b * w0);
    let t3 = (&(&dp.n11 * &dp.n22) * &q).scale(p_b * p_b);
    Ok(SvisPolynomial { poly: &(&t1 - &t2) + &t3, cleared: &(&dp.d11 * &dp.d22) * &q })
}

/// Closed-loop modes of a single-infeed system with grid strength `λ`.
pub fn svis_modes(model: &DeviceModel, p_b: f64, u: f64, lambda: f64, prov: Provenance) -> Result<ModeSet> {
    let sp = svis_char_poly(model, p_b, u, lambda)?;
    // No root of the cleared factor is a root of the numerator, so there is
    // nothing spurious to filter.
    let mp = MatrixPolynomial::from_entries(&[vec![sp.poly.clone()]])?.with_finite_count(sp.poly.degree());
    poly_eigs_with(&mp, PolyEigOptions { provenance: prov, ..Default::default() })
}

/// Which network description the multi-infeed characteristic uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkModel {
    /// Nodal form with the `N` coupling dropped.
    Simplified,
    /// Nodal form with `N` retained.
    Full,
    /// Every branch carries its own current states; adds the line loop modes.
    LineStates,
}

impl NetworkModel {
    pub fn provenance(self) -> Provenance {
        match self {
            NetworkModel::Simplified => Provenance::Simplified,
            NetworkModel::Full => Provenance::Full,
            NetworkModel::LineStates => Provenance::LineStates,
        }
    }
}

/// `J_PED − J_net` as a `2n×2n` rational matrix (device powers on the system base).
pub fn mpeis_transfer_matrix(sys: &System, op: &OperatingPoint, include_n: bool) -> Result<TransferMatrix> {
    let n = sys.n();
    let c = NetworkFrequencyCoeffs::new(sys.omega0());
    let jnet = grid_jacobian_multi(&sys.b, op, include_n, &c)?;
    let mut jped = TransferMatrix::zeros(2 * n, 2 * n);
    for (i, d) in sys.devices.iter().enumerate() {
        let g = vsc_jacobian(&d.model, d.p_b, d.q_b, op.u[i])?.scale(d.s_b);
        jped.set(i, n + i, g.get(0, 1).clone());
        jped.set(n + i, i, g.get(1, 0).clone());
    }
    jped.try_sub(&jnet)
}

/// Matrix polynomial whose determinant vanishes exactly at the multi-infeed modes.
pub fn mpeis_char_matrix(sys: &System, op: &OperatingPoint, model: NetworkModel) -> Result<MatrixPolynomial> {
    check_operating_point(&sys.b, op)?;
    for d in &sys.devices {
        if d.q_b.abs() > 1e-9 {
            return Err(Error::UnsupportedOperatingPoint(format!(
                "device {:?}: converter model assumes unity power factor",
                d.bus
            )));
        }
    }
    let polys: Vec<DevicePolys> =
        sys.devices.iter().zip(&op.u).map(|(d, &u)| DevicePolys::new(&d.model, u)).collect::<Result<_>>()?;
    let finite: usize = polys.iter().map(DevicePolys::svis_degree).sum();
    let sigma = Poly::monomial(1, 1.0 / sys.omega0());
    match model {
        NetworkModel::Simplified | NetworkModel::Full => {
            let entries = nodal_entries(sys, op, &polys, &sigma, model == NetworkModel::Full);
            Ok(MatrixPolynomial::from_entries(&entries)?.with_finite_count(finite))
        }
        NetworkModel::LineStates => {
            let (entries, loops) = line_state_entries(sys, op, &polys, &sigma)?;
            Ok(MatrixPolynomial::from_entries(&entries)?.with_finite_count(finite + 2 * loops))
        }
    }
}

fn add(e: &mut [Vec<Poly>], r: usize, c: usize, p: &Poly) {
    e[r][c] = &e[r][c] + p;
}

/// Unknowns per device `i`: `w1, w2, a, b` at `4i..4i+4`; rows: P, Q and the two
/// network relations `a − σb = Σ(M·Δθ − N·ΔU/U)`, `b + σa = Σ(N·Δθ + M·ΔU/U)`.
fn nodal_entries(
    sys: &System,
    op: &OperatingPoint,
    polys: &[DevicePolys],
    sigma: &Poly,
    keep_n: bool,
) -> Vec<Vec<Poly>> {
    let n = sys.n();
    let (m, nn) = coupling_matrices(&sys.b, op);
    let nv = |i: usize, j: usize| if keep_n { nn[(i, j)] } else { 0.0 };
    let mut e = vec![vec![Poly::zero(); 4 * n]; 4 * n];
    let one = Poly::one();
    for (i, dp) in polys.iter().enumerate() {
        let d = &sys.devices[i];
        let (pd, pn, qn, u) = (d.p_abs(), op.p[i], op.q[i], op.u[i]);
        let (w1, w2, a, b) = (4 * i, 4 * i + 1, 4 * i + 2, 4 * i + 3);
        // P row: (P_dev − P_net)·ΔU/U + P_dev·U·Y11·ΔU/U + Q·Δθ − a = 0
        add(&mut e, w1, w1, &(&dp.d11.scale(pd - pn) + &dp.n11.scale(pd * u)));
        add(&mut e, w1, w2, &dp.d22.scale(qn));
        add(&mut e, w1, a, &-&one);
        // Q row: (P_dev − P_net)·Δθ − P_dev·U·Y22·Δθ − Q·ΔU/U − b = 0
        add(&mut e, w2, w2, &(&dp.d22.scale(pd - pn) - &dp.n22.scale(pd * u)));
        add(&mut e, w2, w1, &dp.d11.scale(-qn));
        add(&mut e, w2, b, &-&one);
        // network relations
        add(&mut e, a, a, &one);
        add(&mut e, a, b, &-sigma);
        add(&mut e, b, b, &one);
        add(&mut e, b, a, sigma);
        for (k, dk) in polys.iter().enumerate() {
            let (mik, nik) = (m[(i, k)], nv(i, k));
            let (kw1, kw2) = (4 * k, 4 * k + 1);
            add(&mut e, a, kw2, &dk.d22.scale(-mik));
            add(&mut e, a, kw1, &dk.d11.scale(nik));
            add(&mut e, b, kw2, &dk.d22.scale(-nik));
            add(&mut e, b, kw1, &dk.d11.scale(-mik));
        }
    }
    e
}

/// Unknowns: per device `w1, w2`; per branch the dq current deviation `(c, e)`;
/// per passive bus its Cartesian voltage deviation `(X, Y)`. Each branch obeys
/// `(1 − jσ)·ΔI = −j·b·(ΔU_from − ΔU_to)`; returns the entries and the number of
/// independent loops.
fn line_state_entries(
    sys: &System,
    op: &OperatingPoint,
    polys: &[DevicePolys],
    sigma: &Poly,
) -> Result<(Vec<Vec<Poly>>, usize)> {
    let n = sys.n();
    let passive = sys.passive_buses();
    let br = &sys.grid.branches;
    let ne = br.len();
    let dim = 2 * n + 2 * ne + 2 * passive.len();
    let mut e = vec![vec![Poly::zero(); dim]; dim];
    let one = Poly::one();
    let th = op.angles();
    let dev_idx = |id: &str| sys.devices.iter().position(|d| d.bus == id);
    let pas_idx = |id: &str| passive.iter().position(|p| p == id);

    // Cartesian voltage deviation (X, Y) at a bus as polynomial coefficients on unknowns.
    let voltage = |id: &str| -> Vec<(usize, Poly, Poly)> {
        if id == GROUND {
            return vec![];
        }
        if let Some(i) = dev_idx(id) {
            let (s, c) = th[i].sin_cos();
            let u = op.u[i];
            let dp = &polys[i];
            vec![
                (2 * i, dp.d11.scale(u * c), dp.d11.scale(u * s)),
                (2 * i + 1, dp.d22.scale(-u * s), dp.d22.scale(u * c)),
            ]
        } else {
            let p = pas_idx(id).expect("validated bus");
            let base = 2 * n + 2 * ne + 2 * p;
            vec![(base, one.clone(), Poly::zero()), (base + 1, Poly::zero(), one.clone())]
        }
    };

    for (k, b) in br.iter().enumerate() {
        let (rc, re) = (2 * n + 2 * k, 2 * n + 2 * k + 1);
        let y = b.b();
        // c + σe − b(Y_f − Y_t) = 0 ; e − σc + b(X_f − X_t) = 0
        add(&mut e, rc, rc, &one);
        add(&mut e, rc, re, sigma);
        add(&mut e, re, re, &one);
        add(&mut e, re, rc, &-sigma);
        for (id, sg) in [(&b.from, 1.0), (&b.to, -1.0)] {
            for (col, px, py) in voltage(id) {
                add(&mut e, rc, col, &py.scale(-y * sg));
                add(&mut e, re, col, &px.scale(y * sg));
            }
        }
    }

    for (i, dp) in polys.iter().enumerate() {
        let d = &sys.devices[i];
        let (pd, pn, qn, u) = (d.p_abs(), op.p[i], op.q[i], op.u[i]);
        let (w1, w2) = (2 * i, 2 * i + 1);
        add(&mut e, w1, w1, &(&dp.d11.scale(pd - pn) + &dp.n11.scale(pd * u)));
        add(&mut e, w1, w2, &dp.d22.scale(qn));
        add(&mut e, w2, w2, &(&dp.d22.scale(pd - pn) - &dp.n22.scale(pd * u)));
        add(&mut e, w2, w1, &dp.d11.scale(-qn));
        let (s, c) = th[i].sin_cos();
        for (k, b) in br.iter().enumerate() {
            let inc = if b.from == d.bus {
                1.0
            } else if b.to == d.bus {
                -1.0
            } else {
                continue;
            };
            let (cc, ce) = (2 * n + 2 * k, 2 * n + 2 * k + 1);
            // −Re J = −U·inc·(cosθ·c + sinθ·e) ; +Im J = U·inc·(cosθ·e − sinθ·c)
            add(&mut e, w1, cc, &Poly::constant(-u * inc * c));
            add(&mut e, w1, ce, &Poly::constant(-u * inc * s));
            add(&mut e, w2, ce, &Poly::constant(u * inc * c));
            add(&mut e, w2, cc, &Poly::constant(-u * inc * s));
        }
    }

    for (p, id) in passive.iter().enumerate() {
        let (rx, ry) = (2 * n + 2 * ne + 2 * p, 2 * n + 2 * ne + 2 * p + 1);
        for (k, b) in br.iter().enumerate() {
            let inc = if &b.from == id {
                1.0
            } else if &b.to == id {
                -1.0
            } else {
                continue;
            };
            add(&mut e, rx, 2 * n + 2 * k, &Poly::constant(inc));
            add(&mut e, ry, 2 * n + 2 * k + 1, &Poly::constant(inc));
        }
    }
    let loops = ne.checked_sub(n + passive.len()).ok_or_else(|| Error::Assembly("fewer branches than buses".into()))?;
    Ok((e, loops))
}

/// Closed-loop modes of the multi-infeed system.
pub fn mpeis_modes(sys: &System, op: &OperatingPoint, model: NetworkModel) -> Result<ModeSet> {
    let mp = mpeis_char_matrix(sys, op, model)?;
    poly_eigs_with(&mp, PolyEigOptions { provenance: model.provenance(), ..Default::default() })
}

/// Which index the decoupling is based on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    /// Eigenvalues of `J_eq`; equivalent systems `(P_b, Q_b, 1, 1, λ_i, λ_i)`.
    Gscr,
    /// Eigenvalues of `J_eqo`; equivalent systems `(1, 0, 1, 1, λ_i, λ_i)`.
    #[default]
    Ogscr,
}

/// Parameters of one equivalent single-infeed system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentSvis {
    /// 1-based position in ascending `λ` order.
    pub index: usize,
    pub lambda: f64,
    pub p_b: f64,
    pub q_b: f64,
    pub u: f64,
    pub s_b: f64,
    /// Equivalent grid susceptance.
    pub b: f64,
    /// Equivalent short-circuit ratio, `b/S_B = λ`.
    pub scr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvisResult {
    pub svis: EquivalentSvis,
    pub modes: ModeSet,
}

/// Splits an `n`-infeed system of identical converters into `n` single-infeed
/// systems, one per eigenvalue of the relevant extended Jacobian.
pub fn decouple(sys: &System, op: &OperatingPoint, pathway: Pathway, exec: Exec) -> Result<Vec<SvisResult>> {
    let model = &sys.devices[0].model;
    for d in &sys.devices[1..] {
        if &d.model != model {
            return Err(Error::AssumptionViolation(format!(
                "device {:?} has a different converter model; decoupling needs identical devices",
                d.bus
            )));
        }
    }
    if let Some(u) = op.u.iter().find(|u| (**u - 1.0).abs() > 1e-9) {
        return Err(Error::AssumptionViolation(format!("decoupling needs U = 1, found {u}")));
    }
    let svis: Vec<EquivalentSvis> = match pathway {
        Pathway::Gscr => {
            let (p0, q0) = (sys.devices[0].p_b, sys.devices[0].q_b);
            if sys.devices.iter().any(|d| (d.p_b - p0).abs() > 1e-9 || (d.q_b - q0).abs() > 1e-9) {
                return Err(Error::AssumptionViolation(
                    "gSCR decoupling needs the same per-unit loading on every device".into(),
                ));
            }
            let eig = weighted_eigensystem(&extended_jacobian(&sys.b, &sys.devices)?)?;
            eig.eigenvalues
                .iter()
                .enumerate()
                .map(|(i, &l)| EquivalentSvis {
                    index: i + 1,
                    lambda: l,
                    p_b: p0,
                    q_b: q0,
                    u: 1.0,
                    s_b: 1.0,
                    b: l,
                    scr: l,
                })
                .collect()
        }
        Pathway::Ogscr => {
            let eig = weighted_eigensystem(&operation_jacobian(&sys.b, &sys.devices, op, Weighting::AbsolutePower)?)?;
            eig.eigenvalues
                .iter()
                .enumerate()
                .map(|(i, &l)| EquivalentSvis {
                    index: i + 1,
                    lambda: l,
                    p_b: 1.0,
                    q_b: 0.0,
                    u: 1.0,
                    s_b: 1.0,
                    b: l,
                    scr: l,
                })
                .collect()
        }
    };
    par::try_map(exec, &svis, |e| {
        let modes = svis_modes(model, e.p_b, e.u, e.lambda, Provenance::Svis(e.index))?;
        Ok(SvisResult { svis: *e, modes })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusEntry {
    pub re: f64,
    pub im: f64,
    pub ratio: f64,
}

/// Size of the dropped `N` coupling relative to the simplified characteristic
/// matrix, evaluated at each mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusReport {
    pub entries: Vec<FrobeniusEntry>,
    pub max_ratio: f64,
    pub skipped: Vec<String>,
}

pub fn frobenius_check(sys: &System, op: &OperatingPoint, modes: &ModeSet) -> Result<FrobeniusReport> {
    let jsim = mpeis_transfer_matrix(sys, op, false)?;
    let (_, nn) = coupling_matrices(&sys.b, op);
    let n = sys.n();
    let c = NetworkFrequencyCoeffs::new(sys.omega0());
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for m in &modes.modes {
        let s = m.s();
        let (j, al, be) = match (jsim.eval(s), c.alpha.eval(s), c.beta.eval(s)) {
            (Ok(j), Ok(a), Ok(b)) => (j, a, b),
            _ => {
                skipped.push(format!("pole at s = {} {:+}j", s.re, s.im));
                continue;
            }
        };
        // [[−βN, αN], [−αN, −βN]]
        let nneg = Mat::<Complex64>::from_fn(2 * n, 2 * n, |r, col| {
            let v = nn[(r % n, col % n)];
            match (r < n, col < n) {
                (true, true) | (false, false) => -be * v,
                (true, false) => al * v,
                (false, true) => -al * v,
            }
        });
        let fro = |a: &Mat<Complex64>| a.norm_l2();
        let ratio = fro(&nneg) / fro(&j);
        entries.push(FrobeniusEntry { re: s.re, im: s.im, ratio });
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(FrobeniusReport { entries, max_ratio, skipped })
}

/// Rational-matrix residual check used in tests: smallest singular value of
/// `J_PED − J_net` at `s`, relative to the largest.
pub fn relative_singularity(t: &TransferMatrix, s: Complex64) -> Result<f64> {
    let sv = t.eval(s)?.singular_values().map_err(|e| Error::Numerical(format!("{e:?}")))?;
    Ok(sv[sv.len() - 1] / sv[0])
}
