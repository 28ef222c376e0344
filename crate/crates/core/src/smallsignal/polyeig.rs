//! Polynomial eigenvalue extraction by block-companion linearization and QZ.

use std::f64::consts::PI;
use std::fmt;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::transfer::MatrixPolynomial;
use crate::{Error, Result};

/// Where a mode set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Single-infeed system analysed directly.
    Single,
    /// Equivalent single-infeed system `i` (1-based) of a decoupled system.
    Svis(usize),
    /// Multi-infeed system with the `N` coupling dropped.
    Simplified,
    /// Multi-infeed system with the `N` coupling retained.
    Full,
    /// Multi-infeed system with explicit branch-current states.
    LineStates,
    /// Anything else (tests, ad-hoc polynomials).
    Other,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Single => write!(f, "single"),
            Provenance::Svis(i) => write!(f, "svis({i})"),
            Provenance::Simplified => write!(f, "simplified"),
            Provenance::Full => write!(f, "full"),
            Provenance::LineStates => write!(f, "line_states"),
            Provenance::Other => write!(f, "other"),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "single" => Provenance::Single,
            "simplified" => Provenance::Simplified,
            "full" => Provenance::Full,
            "line_states" => Provenance::LineStates,
            "other" => Provenance::Other,
            x => {
                let inner = x
                    .strip_prefix("svis(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| serde::de::Error::custom(format!("unknown provenance {x:?}")))?;
                Provenance::Svis(inner)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub re: f64,
    pub im: f64,
    pub zeta: f64,
    pub freq_hz: f64,
}

impl Mode {
    pub fn new(s: Complex64) -> Self {
        let mag = s.norm();
        let zeta = if mag > 0.0 { -s.re / mag } else { 0.0 };
        Mode { re: s.re, im: s.im, zeta, freq_hz: s.im.abs() / (2.0 * PI) }
    }

    pub fn s(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn is_oscillatory(&self, min_im: f64) -> bool {
        self.im.abs() > min_im
    }
}

/// Imaginary-part threshold (rad/s) separating oscillatory modes from drift modes.
pub const OSCILLATORY_MIN_IM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub provenance: Provenance,
    pub modes: Vec<Mode>,
    /// Roots discarded as artifacts of denominator clearing.
    pub removed_spurious: Vec<Mode>,
    pub warnings: Vec<String>,
}

impl ModeSet {
    pub fn from_values(provenance: Provenance, values: Vec<Complex64>) -> Self {
        let mut modes: Vec<Mode> = conjugate_symmetric(values).into_iter().map(Mode::new).collect();
        sort_modes(&mut modes);
        ModeSet { provenance, modes, removed_spurious: vec![], warnings: vec![] }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.modes.iter().map(Mode::s).collect()
    }

    /// The oscillatory mode (`|Im| > 1 rad/s`) with the largest real part, upper
    /// half-plane member of its pair.
    pub fn weakest_oscillatory(&self) -> Option<Mode> {
        self.modes
            .iter()
            .filter(|m| m.is_oscillatory(OSCILLATORY_MIN_IM) && m.im > 0.0)
            .max_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)))
            .copied()
    }

    /// Largest real part over every finite mode, drift modes included.
    pub fn max_real_part(&self) -> Option<f64> {
        self.modes.iter().map(|m| m.re).max_by(f64::total_cmp)
    }
}

/// Orders modes by `|Im|`, then real part, then the sign of `Im`.
pub fn sort_modes(m: &mut [Mode]) {
    m.sort_by(|a, b| a.im.abs().total_cmp(&b.im.abs()).then(a.re.total_cmp(&b.re)).then(a.im.total_cmp(&b.im)));
}

/// Replaces each lower-half-plane value by the conjugate of its upper partner so
/// that the set is exactly closed under conjugation.
fn conjugate_symmetric(values: Vec<Complex64>) -> Vec<Complex64> {
    let upper: Vec<Complex64> = values.iter().filter(|z| z.im > 0.0).copied().collect();
    let lower = values.iter().filter(|z| z.im < 0.0).count();
    if upper.len() != lower {
        return values;
    }
    let mut out: Vec<Complex64> = values.iter().filter(|z| z.im == 0.0).copied().collect();
    for z in upper {
        out.push(z);
        out.push(z.conj());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyEigOptions {
    /// When the finite count is unknown, eigenvalues with scaled modulus above this
    /// are treated as (perturbed) infinite ones.
    pub max_scaled_modulus: f64,
    /// Relative distance to a cleared root under which a mode is a spurious candidate.
    pub spurious_tol: f64,
    pub provenance: Provenance,
}

impl Default for PolyEigOptions {
    fn default() -> Self {
        PolyEigOptions { max_scaled_modulus: 1e4, spurious_tol: 1e-6, provenance: Provenance::Other }
    }
}

pub fn poly_eigs(mp: &MatrixPolynomial) -> Result<ModeSet> {
    poly_eigs_with(mp, PolyEigOptions::default())
}

pub fn poly_eigs_with(mp: &MatrixPolynomial, opts: PolyEigOptions) -> Result<ModeSet> {
    let m = mp.dim();
    let d = mp.degree();
    let fro = |a: &Mat<f64>| a.norm_l2();
    if fro(&mp.coeffs[d]) == 0.0 {
        return Err(Error::MatrixStructure("leading coefficient is zero".into()));
    }
    if d == 0 {
        return Ok(ModeSet::from_values(opts.provenance, vec![]));
    }
    // Variable scaling s = γ·t balances the outer coefficients.
    let (n0, nd) = (fro(&mp.coeffs[0]), fro(&mp.coeffs[d]));
    let gamma = if n0 > 0.0 { (n0 / nd).powf(1.0 / d as f64) } else { 1.0 };
    let mut a: Vec<Mat<f64>> =
        mp.coeffs.iter().enumerate().map(|(k, c)| c * faer::Scale(gamma.powi(k as i32))).collect();
    equilibrate(&mut a);

    // Shift-and-invert: with t = σ + 1/μ the reversed shifted polynomial has
    // leading coefficient A(σ), so μ solves a standard eigenproblem and
    // infinite eigenvalues land at μ = 0.
    let shifted = |sigma: f64| -> Vec<Mat<f64>> {
        (0..=d)
            .map(|j| {
                let mut b = Mat::<f64>::zeros(m, m);
                for (k, ak) in a.iter().enumerate().skip(j) {
                    b += ak * faer::Scale(binomial(k, j) * sigma.powi((k - j) as i32));
                }
                b
            })
            .collect()
    };
    let rcond = |b: &Mat<f64>| {
        let sv = b.singular_values().unwrap_or_default();
        match (sv.first(), sv.last()) {
            (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
            _ => 0.0,
        }
    };
    let (sigma, b) = SHIFTS
        .iter()
        .map(|&sg| {
            let b = shifted(sg);
            (sg, rcond(&b[0]), b)
        })
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(sg, _, b)| (sg, b))
        .unwrap();
    let lu = b[0].partial_piv_lu();
    let n = d * m;
    let mut c = Mat::<f64>::zeros(n, n);
    for blk in 0..d - 1 {
        for i in 0..m {
            c[(blk * m + i, (blk + 1) * m + i)] = 1.0;
        }
    }
    for k in 0..d {
        let x = lu.solve(&b[d - k]);
        for i in 0..m {
            for j in 0..m {
                c[((d - 1) * m + i, k * m + j)] = -x[(i, j)];
            }
        }
    }
    let mut mu: Vec<Complex64> =
        c.eigenvalues().map_err(|err| Error::Numerical(format!("eigensolver failed: {err:?}")))?;
    mu.retain(|z| z.re.is_finite() && z.im.is_finite());
    mu.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(x.im.total_cmp(&y.im)));
    let to_t = |z: Complex64| Complex64::new(sigma, 0.0) + z.inv();

    let mut warnings = Vec::new();
    let kept: Vec<Complex64> = match mp.finite_count {
        Some(k) => {
            let nonzero = mu.iter().filter(|z| z.norm() > 0.0).count();
            if nonzero < k {
                return Err(Error::Degenerate(format!("expected {k} finite eigenvalues, pencil has only {nonzero}")));
            }
            if k > 0 && mu.len() > k {
                let gap = mu[k - 1].norm() / mu[k].norm().max(f64::MIN_POSITIVE);
                if gap < 10.0 {
                    warnings.push(format!("weak separation between finite and infinite eigenvalues (ratio {gap:.3})"));
                }
            }
            mu.into_iter().take(k).map(to_t).collect()
        }
        None => mu
            .into_iter()
            .filter(|z| z.norm() > 0.0)
            .map(to_t)
            .filter(|t| t.norm() <= opts.max_scaled_modulus)
            .collect(),
    };
    let values: Vec<Complex64> = kept.into_iter().map(|t| t * gamma).collect();
    let (values, removed) = filter_spurious(mp, values, opts.spurious_tol);
    let mut ms = ModeSet::from_values(opts.provenance, values);
    ms.removed_spurious = removed.into_iter().map(Mode::new).collect();
    ms.warnings = warnings;
    Ok(ms)
}

/// Candidate shifts in scaled units; the best-conditioned `A(σ)` wins.
const SHIFTS: [f64; 5] = [0.4142, -0.6813, 1.2599, -1.7321, 0.1];

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Row then column scaling to unit max-abs over all coefficients.
fn equilibrate(a: &mut [Mat<f64>]) {
    let m = a[0].nrows();
    for i in 0..m {
        let r = a.iter().flat_map(|c| (0..m).map(move |j| c[(i, j)].abs())).fold(0.0, f64::max);
        if r > 0.0 {
            for c in a.iter_mut() {
                for j in 0..m {
                    c[(i, j)] /= r;
                }
            }
        }
    }
    for j in 0..m {
        let r = a.iter().flat_map(|c| (0..m).map(move |i| c[(i, j)].abs())).fold(0.0, f64::max);
        if r > 0.0 {
            for c in a.iter_mut() {
                for i in 0..m {
                    c[(i, j)] /= r;
                }
            }
        }
    }
}

/// Removes eigenvalues introduced by denominator clearing. Around each distinct
/// cleared root of multiplicity `k`, up to `k` of the nearest eigenvalues are
/// dropped. A candidate is kept anyway when the source rational matrix is finite
/// there and numerically singular (smallest singular value ≤ 1e-6 relative).
const SINGULAR_TOL: f64 = 1e-10;

/// `σmin(P(r)) / Σ‖A_k‖·|r|^k`.
fn relative_singularity(mp: &MatrixPolynomial, r: Complex64) -> f64 {
    let scale: f64 = mp.coeffs.iter().enumerate().map(|(k, a)| a.norm_l2() * r.norm().powi(k as i32)).sum();
    let sv = mp.eval(r).singular_values().unwrap_or_default();
    match sv.last() {
        Some(&lo) if scale > 0.0 => lo / scale,
        _ => 0.0,
    }
}

fn filter_spurious(mp: &MatrixPolynomial, values: Vec<Complex64>, tol: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    if mp.cleared_roots.is_empty() {
        return (values, vec![]);
    }
    let near = |a: Complex64, b: Complex64| (a - b).norm() <= tol * b.norm().max(1.0);
    // Distinct cleared roots with multiplicities.
    let mut groups: Vec<(Complex64, usize)> = Vec::new();
    for &r in &mp.cleared_roots {
        match groups.iter_mut().find(|(g, _)| near(r, *g)) {
            Some(g) => g.1 += 1,
            None => groups.push((r, 1)),
        }
    }
    let poles = mp.source.as_ref().map(|s| s.poles()).unwrap_or_default();
    let mut drop = vec![false; values.len()];
    for (r, mult) in groups {
        // Only a root at which the cleared polynomial is singular can carry
        // spurious eigenvalues; genuine modes may sit arbitrarily close to it.
        let rel = relative_singularity(mp, r);
        if rel > SINGULAR_TOL {
            continue;
        }
        let mut idx: Vec<usize> = (0..values.len()).filter(|&i| !drop[i] && near(values[i], r)).collect();
        idx.sort_by(|&i, &j| (values[i] - r).norm().total_cmp(&(values[j] - r).norm()));
        for &i in idx.iter().take(mult) {
            let s = values[i];
            let genuine = match &mp.source {
                Some(src) if !poles.iter().any(|p| near(s, *p)) => src
                    .eval(s)
                    .ok()
                    .and_then(|j| j.singular_values().ok())
                    .map(|sv| sv[sv.len() - 1] <= 1e-6 * sv[0])
                    .unwrap_or(false),
                _ => false,
            };
            drop[i] = !genuine;
        }
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (v, d) in values.into_iter().zip(drop) {
        if d {
            removed.push(v)
        } else {
            kept.push(v)
        }
    }
    (kept, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallsignal::poly::Poly;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn scalar_quadratic() {
        let mp = MatrixPolynomial::from_entries(&[vec![Poly::new(vec![5.0, 2.0, 1.0])]]).unwrap();
        let ms = poly_eigs(&mp).unwrap();
        assert_eq!(ms.len(), 2);
        let w = ms.weakest_oscillatory().unwrap();
        assert!(close(w.s(), Complex64::new(-1.0, 2.0), 1e-12));
        assert!((w.zeta - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(ms.modes[0].im, -ms.modes[1].im);
    }

    #[test]
    fn two_by_two_constructed_determinant() {
        // [[s²+1, 1], [0, s+3]] → det (s²+1)(s+3)
        let e = vec![vec![Poly::new(vec![1.0, 0.0, 1.0]), Poly::one()], vec![Poly::zero(), Poly::linear(1.0, 3.0)]];
        let mp = MatrixPolynomial::from_entries(&e).unwrap().with_finite_count(3);
        let ms = poly_eigs(&mp).unwrap();
        let v = ms.values();
        assert_eq!(v.len(), 3);
        for want in [Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0), Complex64::new(-3.0, 0.0)] {
            assert!(v.iter().any(|z| close(*z, want, 1e-10)), "missing {want}");
        }
    }

    #[test]
    fn infinite_eigenvalues_are_discarded_without_hint() {
        let e = vec![vec![Poly::new(vec![1.0, 0.0, 1.0]), Poly::one()], vec![Poly::zero(), Poly::linear(1.0, 3.0)]];
        let mp = MatrixPolynomial::from_entries(&e).unwrap();
        assert_eq!(poly_eigs(&mp).unwrap().len(), 3);
    }

    #[test]
    fn provenance_round_trip() {
        for p in [Provenance::Svis(3), Provenance::Full, Provenance::LineStates] {
            let s = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<Provenance>(&s).unwrap(), p);
        }
    }
}
