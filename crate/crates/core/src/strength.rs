//! Eigen-analysis of weighted extended Jacobians `D·B`: grid-strength indices,
//! participation factors and first-order sensitivities of the minimum eigenvalue.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::network::{full_susceptance, DeviceSpec, GridSpec, WeightedJacobian, Weighting, GROUND};
use crate::{Error, Result};

/// Eigenvalues ascending, right eigenvectors `u_i` (columns), left eigenvectors
/// `v_i = D⁻¹u_i` (rows), normalised so that `v_i·u_j = δ_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
    right: Mat<f64>,
    left: Mat<f64>,
}

impl EigenSystem {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Right eigenvector of mode `i` (0-based).
    pub fn right(&self, i: usize) -> Vec<f64> {
        (0..self.n()).map(|k| self.right[(k, i)]).collect()
    }

    /// Left eigenvector of mode `i` (0-based).
    pub fn left(&self, i: usize) -> Vec<f64> {
        (0..self.n()).map(|k| self.left[(i, k)]).collect()
    }

    pub fn right_matrix(&self) -> &Mat<f64> {
        &self.right
    }

    pub fn left_matrix(&self) -> &Mat<f64> {
        &self.left
    }

    /// `Σ λ_i u_i v_i`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let n = self.n();
        Mat::from_fn(n, n, |r, c| (0..n).map(|i| self.eigenvalues[i] * self.right[(r, i)] * self.left[(i, c)]).sum())
    }
}

pub fn weighted_eigensystem(j: &WeightedJacobian) -> Result<EigenSystem> {
    let n = j.n();
    if let Some(w) = j.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Validation(format!("weight {w} is not positive")));
    }
    j.susceptance.check_structure().map_err(|e| match e {
        Error::Singular(m) => Error::MatrixStructure(m),
        other => other,
    })?;
    let sq: Vec<f64> = j.weights.iter().map(|w| w.sqrt()).collect();
    let b = j.susceptance.matrix();
    let s = Mat::from_fn(n, n, |r, c| sq[r] * b[(r, c)] * sq[c]);
    let eig = s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let (vals, x) = (eig.S(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| vals[a].total_cmp(&vals[c]));
    let mut right = Mat::<f64>::zeros(n, n);
    let mut left = Mat::<f64>::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (col, &i) in order.iter().enumerate() {
        eigenvalues.push(vals[i]);
        let xi: Vec<f64> = (0..n).map(|k| x[(k, i)]).collect();
        let sum: f64 = xi.iter().sum();
        let sign = if sum.abs() > 1e-12 {
            sum.signum()
        } else {
            let k = (0..n).max_by(|&a, &c| xi[a].abs().total_cmp(&xi[c].abs())).unwrap();
            xi[k].signum()
        };
        for k in 0..n {
            right[(k, col)] = sign * sq[k] * xi[k];
            left[(col, k)] = sign * xi[k] / sq[k];
        }
    }
    Ok(EigenSystem { eigenvalues, weights: j.weights.clone(), right, left })
}

/// Minimum eigenvalue of `J_eq`.
pub fn gscr(eig: &EigenSystem) -> f64 {
    eig.eigenvalues[0]
}

/// Minimum eigenvalue of `J_eqo`.
pub fn ogscr(eig: &EigenSystem) -> f64 {
    eig.eigenvalues[0]
}

/// `1/(S_B·Z)` for one device behind one reactance.
pub fn scr_single(s_b: f64, reactance: f64) -> Result<f64> {
    if !(s_b > 0.0 && reactance > 0.0) {
        return Err(Error::Validation(format!("S_B and Z must be positive, got {s_b} and {reactance}")));
    }
    Ok(1.0 / (s_b * reactance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationRow {
    /// 1-based mode index.
    pub mode: usize,
    pub eigenvalue: f64,
    /// `v_n·u_n`, summing to 1.
    pub raw: Vec<f64>,
    /// `raw` divided by its largest entry.
    pub normalized: Vec<f64>,
}

pub fn participation(eig: &EigenSystem, mode_index: usize) -> Result<ParticipationRow> {
    let n = eig.n();
    if mode_index == 0 || mode_index > n {
        return Err(Error::IndexOutOfRange(format!("mode {mode_index} not in 1..={n}")));
    }
    let i = mode_index - 1;
    let raw: Vec<f64> = (0..n).map(|k| eig.left[(i, k)] * eig.right[(k, i)]).collect();
    let mx = raw.iter().cloned().fold(f64::MIN, f64::max);
    let normalized = raw.iter().map(|p| p / mx).collect();
    Ok(ParticipationRow { mode: mode_index, eigenvalue: eig.eigenvalues[i], raw, normalized })
}

/// Which index a sensitivity report refers to; fixes how the weights depend on
/// `S_B` and `P_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "index", content = "weighting")]
pub enum IndexKind {
    Gscr,
    Ogscr(Weighting),
}

impl IndexKind {
    /// Exponents `(a, c)` in `w_i ∝ S_Bi^{-a}·P_bi^{-c}`.
    fn exponents(self) -> (f64, f64) {
        match self {
            IndexKind::Gscr => (1.0, 0.0),
            IndexKind::Ogscr(Weighting::AbsolutePower) => (1.0, 1.0),
            IndexKind::Ogscr(Weighting::PerUnitPower) => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSensitivity {
    /// Position in the grid's branch list.
    pub branch: usize,
    pub from: String,
    pub to: String,
    pub grounding: bool,
    /// Derivative with respect to the branch susceptance.
    pub d_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub kind: IndexKind,
    pub value: f64,
    /// `∂λ1/∂S_Bi` per device.
    pub capacity: Vec<f64>,
    /// `∂λ1/∂P_bi` per device.
    pub power: Vec<f64>,
    pub branches: Vec<BranchSensitivity>,
    pub warnings: Vec<String>,
}

/// Closed-form sensitivities of `λ1`. Branch terms use the right eigenvector
/// extended to passive buses, `ũ_p = −B_pp⁻¹·B_pd·u`, giving `(ũ_i − ũ_j)²` per
/// branch and `ũ_i²` per grounding branch.
pub fn sensitivities(
    eig: &EigenSystem,
    grid: &GridSpec,
    devices: &[DeviceSpec],
    kind: IndexKind,
) -> Result<SensitivityReport> {
    let n = eig.n();
    if devices.len() != n {
        return Err(Error::Validation(format!("{} devices for {n} eigenvalues", devices.len())));
    }
    let mut warnings = Vec::new();
    if n > 1 && eig.eigenvalues[1] - eig.eigenvalues[0] < 1e-9 {
        warnings.push("minimum eigenvalue is (nearly) repeated; sensitivities are direction-dependent".into());
    }
    let lam = eig.eigenvalues[0];
    let u = eig.right(0);
    let p: Vec<f64> = (0..n).map(|k| eig.left[(0, k)] * u[k]).collect();
    let (a, c) = kind.exponents();
    let capacity = (0..n).map(|k| -a * lam * p[k] / devices[k].s_b).collect();
    let power = (0..n).map(|k| -c * lam * p[k] / devices[k].p_b).collect();

    let mut order: Vec<String> = devices.iter().map(|d| d.bus.clone()).collect();
    let passive: Vec<String> = grid.buses.iter().filter(|b| !order.contains(b)).cloned().collect();
    order.extend(passive.iter().cloned());
    let full = full_susceptance(grid, &order)?;
    let mut ext = u.clone();
    if !passive.is_empty() {
        let np = passive.len();
        let bpp = Mat::from_fn(np, np, |r, s| full.get(n + r, n + s));
        let bpd = Mat::from_fn(np, n, |r, s| full.get(n + r, s));
        let ud = Mat::from_fn(n, 1, |r, _| u[r]);
        let chol = bpp.llt(Side::Lower).map_err(|_| Error::Elimination("passive block is singular".into()))?;
        let up = chol.solve(&(&bpd * &ud));
        ext.extend((0..np).map(|r| -up[(r, 0)]));
    }
    let val = |id: &str| if id == GROUND { 0.0 } else { ext[order.iter().position(|b| b == id).unwrap()] };
    let branches = grid
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let d = val(&br.from) - val(&br.to);
            BranchSensitivity {
                branch: k,
                from: br.from.clone(),
                to: br.to.clone(),
                grounding: br.is_grounding(),
                d_db: d * d,
            }
        })
        .collect();
    Ok(SensitivityReport { kind, value: lam, capacity, power, branches, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_susceptance, extended_jacobian, SusceptanceMatrix};
    use crate::smallsignal::vsc::DeviceModel;
    use approx::assert_relative_eq;

    #[test]
    fn textbook_pair() {
        let b =
            SusceptanceMatrix::from_rows(vec!["1".into(), "2".into()], &[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let e = weighted_eigensystem(&WeightedJacobian::new(vec![1.0, 1.0], b).unwrap()).unwrap();
        assert_relative_eq!(e.eigenvalues[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.eigenvalues[1], 3.0, epsilon = 1e-14);
        let u = e.right(0);
        assert!(u[0] > 0.0 && (u[0] - u[1]).abs() < 1e-14);
        let p = participation(&e, 1).unwrap();
        assert_relative_eq!(p.normalized[0], 1.0);
        assert_relative_eq!(p.normalized[1], 1.0, epsilon = 1e-12);
        assert!(participation(&e, 3).is_err());
        assert!(participation(&e, 0).is_err());
    }

    #[test]
    fn scr_single_cases() {
        assert_relative_eq!(scr_single(1.0, 0.35).unwrap(), 2.857142857142857);
        assert_relative_eq!(scr_single(2.0, 0.25).unwrap(), 2.0);
        assert!(scr_single(0.0, 0.25).is_err());
        let g = GridSpec::new(&["1"], vec![crate::network::Branch::reactance("1", "0", 0.35)]);
        let d = vec![DeviceSpec::new("1", 1.0, 1.0, DeviceModel::reference(0.037, 1.0))];
        let b = build_susceptance(&g, &d).unwrap();
        let e = weighted_eigensystem(&extended_jacobian(&b, &d).unwrap()).unwrap();
        assert_relative_eq!(gscr(&e), scr_single(1.0, 0.35).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn symmetric_pair_has_zero_tie_sensitivity() {
        let r = crate::network::Branch::reactance;
        let g = GridSpec::new(&["1", "2"], vec![r("1", "0", 0.3), r("2", "0", 0.3), r("1", "2", 0.2)]);
        let m = DeviceModel::reference(0.037, 1.0);
        let d = vec![DeviceSpec::new("1", 1.0, 1.0, m.clone()), DeviceSpec::new("2", 1.0, 1.0, m)];
        let b = build_susceptance(&g, &d).unwrap();
        let e = weighted_eigensystem(&extended_jacobian(&b, &d).unwrap()).unwrap();
        let s = sensitivities(&e, &g, &d, IndexKind::Gscr).unwrap();
        assert!(s.branches[2].d_db.abs() < 1e-14);
        assert!(s.branches[0].d_db > 0.0);
        assert!(s.power.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn bad_weights_rejected() {
        let b = SusceptanceMatrix::from_rows(vec!["1".into()], &[vec![2.0]]).unwrap();
        assert!(WeightedJacobian::new(vec![-1.0], b).is_err());
    }
}
