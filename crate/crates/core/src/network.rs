//! Grid description, grounded nodal susceptance matrix, Kron reduction and the
//! weighted extended Jacobians built on top of it.
//!
//! Conventions: resistance is neglected, every branch is inductive, and the
//! susceptance matrix is a grounded Laplacian (positive diagonal, non-positive
//! off-diagonals). The ground reference `"0"` doubles as the infinite bus
//! (`U = 1`, `θ = 0`) when power flows are evaluated.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::smallsignal::vsc::DeviceModel;

/// Identifier of the ground / infinite-bus reference.
pub const GROUND: &str = "0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    #[default]
    Reactance,
    Susceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    /// Per-unit reactance or susceptance, depending on `value_kind`.
    pub value: f64,
    #[serde(default)]
    pub value_kind: ValueKind,
}

impl Branch {
    pub fn reactance(from: &str, to: &str, x: f64) -> Self {
        Branch { from: from.into(), to: to.into(), value: x, value_kind: ValueKind::Reactance }
    }

    pub fn susceptance(from: &str, to: &str, b: f64) -> Self {
        Branch { from: from.into(), to: to.into(), value: b, value_kind: ValueKind::Susceptance }
    }

    /// Branch susceptance `b > 0`.
    pub fn b(&self) -> f64 {
        match self.value_kind {
            ValueKind::Reactance => 1.0 / self.value,
            ValueKind::Susceptance => self.value,
        }
    }

    pub fn is_grounding(&self) -> bool {
        self.from == GROUND || self.to == GROUND
    }

    /// The non-ground endpoint of a grounding branch.
    pub fn grounded_bus(&self) -> Option<&str> {
        if self.to == GROUND {
            Some(&self.from)
        } else if self.from == GROUND {
            Some(&self.to)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Nominal frequency in Hz.
    pub base_frequency: f64,
    pub buses: Vec<String>,
    pub branches: Vec<Branch>,
}

impl GridSpec {
    pub fn new(buses: &[&str], branches: Vec<Branch>) -> Self {
        GridSpec { base_frequency: 50.0, buses: buses.iter().map(|s| s.to_string()).collect(), branches }
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.base_frequency
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b == id)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.base_frequency.is_finite() && self.base_frequency > 0.0, || {
            format!("base frequency must be positive, got {}", self.base_frequency)
        })?;
        ensure(!self.buses.is_empty(), || "grid has no buses".into())?;
        for (i, b) in self.buses.iter().enumerate() {
            ensure(b != GROUND, || format!("bus id {GROUND:?} is reserved for ground"))?;
            ensure(!self.buses[..i].contains(b), || format!("duplicate bus id {b:?}"))?;
        }
        for (k, br) in self.branches.iter().enumerate() {
            ensure(br.value.is_finite() && br.value > 0.0, || {
                format!("branch {k} ({}-{}) has nonpositive value {}", br.from, br.to, br.value)
            })?;
            ensure(br.from != br.to, || format!("branch {k} is a self-loop on {:?}", br.from))?;
            for end in [&br.from, &br.to] {
                ensure(end == GROUND || self.bus_index(end).is_some(), || {
                    format!("branch {k} references unknown bus {end:?}")
                })?;
            }
        }
        if !self.branches.iter().any(Branch::is_grounding) {
            return Err(Error::Singular("no grounding branch; B would not be positive definite".into()));
        }
        // Union-find over buses plus ground (index n).
        let n = self.buses.len();
        let mut parent: Vec<usize> = (0..=n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let idx = |id: &str| if id == GROUND { n } else { self.bus_index(id).unwrap() };
        for br in &self.branches {
            let (a, b) = (find(&mut parent, idx(&br.from)), find(&mut parent, idx(&br.to)));
            parent[a] = b;
        }
        let root = find(&mut parent, n);
        for i in 0..n {
            if find(&mut parent, i) != root {
                return Err(Error::Topology(format!("bus {:?} has no path to ground", self.buses[i])));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub bus: String,
    /// Rated capacity on the system base.
    pub s_b: f64,
    /// Active power on the device base.
    pub p_b: f64,
    /// Reactive power on the device base.
    #[serde(default)]
    pub q_b: f64,
    /// Terminal voltage magnitude.
    #[serde(default = "one")]
    pub u: f64,
    pub model: DeviceModel,
}

fn one() -> f64 {
    1.0
}

impl DeviceSpec {
    pub fn new(bus: &str, s_b: f64, p_b: f64, model: DeviceModel) -> Self {
        DeviceSpec { bus: bus.into(), s_b, p_b, q_b: 0.0, u: 1.0, model }
    }

    /// Active power on the system base, `P_b·S_B`.
    pub fn p_abs(&self) -> f64 {
        self.p_b * self.s_b
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.s_b.is_finite() && self.s_b > 0.0, || {
            format!("device at bus {:?}: S_B must be positive, got {}", self.bus, self.s_b)
        })?;
        ensure(self.u.is_finite() && self.u > 0.0, || {
            format!("device at bus {:?}: U must be positive, got {}", self.bus, self.u)
        })?;
        ensure(self.p_b.is_finite() && self.q_b.is_finite(), || {
            format!("device at bus {:?}: non-finite power", self.bus)
        })?;
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Add each device's filter capacitance `C_f` as a capacitive shunt at its bus.
    pub include_filter_shunt: bool,
}

/// Symmetric nodal susceptance matrix over an ordered list of buses.
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptanceMatrix {
    buses: Vec<String>,
    b: Mat<f64>,
}

impl SusceptanceMatrix {
    /// Wraps a dense matrix after checking grounded-Laplacian structure.
    pub fn from_rows(buses: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = buses.len();
        ensure(rows.len() == n && rows.iter().all(|r| r.len() == n), || format!("expected a {n}x{n} matrix"))?;
        let m = SusceptanceMatrix { buses, b: Mat::from_fn(n, n, |i, j| rows[i][j]) };
        m.check_structure()?;
        Ok(m)
    }

    pub(crate) fn from_mat_unchecked(buses: Vec<String>, b: Mat<f64>) -> Self {
        SusceptanceMatrix { buses, b }
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn buses(&self) -> &[String] {
        &self.buses
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.b[(i, j)]
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.b
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| (0..self.n()).map(|j| self.b[(i, j)]).collect()).collect()
    }

    /// Row sums, i.e. the total susceptance from each bus to ground.
    pub fn grounding(&self) -> Vec<f64> {
        (0..self.n()).map(|i| (0..self.n()).map(|j| self.b[(i, j)]).sum()).collect()
    }

    /// Symmetric, positive diagonal, non-positive off-diagonals, positive definite.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.n();
        let scale = (0..n).map(|i| self.b[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        for i in 0..n {
            if !(self.b[(i, i)] > 0.0) {
                return Err(Error::MatrixStructure(format!("diagonal entry {i} is not positive")));
            }
            for j in 0..n {
                let (a, c) = (self.b[(i, j)], self.b[(j, i)]);
                if !a.is_finite() || (a - c).abs() > 1e-12 * scale {
                    return Err(Error::MatrixStructure(format!("not symmetric at ({i},{j})")));
                }
                if i != j && a > 1e-14 * scale {
                    return Err(Error::MatrixStructure(format!("positive off-diagonal at ({i},{j})")));
                }
            }
        }
        if self.b.llt(Side::Lower).is_err() {
            return Err(Error::Singular("susceptance matrix is not positive definite".into()));
        }
        Ok(())
    }
}

/// Ordering used for the full matrix: device buses first (declaration order of the
/// devices), then passive buses in grid order.
fn bus_order(grid: &GridSpec, device_buses: &[String]) -> Result<(Vec<String>, Vec<String>)> {
    for (i, d) in device_buses.iter().enumerate() {
        if grid.bus_index(d).is_none() {
            return Err(Error::Validation(format!("device bus {d:?} is not a grid bus")));
        }
        ensure(!device_buses[..i].contains(d), || format!("two devices share bus {d:?}"))?;
    }
    let passive = grid.buses.iter().filter(|b| !device_buses.contains(b)).cloned().collect();
    Ok((device_buses.to_vec(), passive))
}

/// Grounded Laplacian over the given bus order, without any elimination.
pub fn full_susceptance(grid: &GridSpec, order: &[String]) -> Result<SusceptanceMatrix> {
    grid.validate()?;
    let n = order.len();
    let pos = |id: &str| order.iter().position(|b| b == id);
    let mut b = Mat::<f64>::zeros(n, n);
    for br in &grid.branches {
        let y = br.b();
        match (pos(&br.from), pos(&br.to)) {
            (Some(i), Some(j)) => {
                b[(i, i)] += y;
                b[(j, j)] += y;
                b[(i, j)] -= y;
                b[(j, i)] -= y;
            }
            (Some(i), None) | (None, Some(i)) => b[(i, i)] += y,
            (None, None) => {
                return Err(Error::Validation(format!("branch {}-{} is outside the bus order", br.from, br.to)))
            }
        }
    }
    Ok(SusceptanceMatrix::from_mat_unchecked(order.to_vec(), b))
}

pub fn build_susceptance(grid: &GridSpec, devices: &[DeviceSpec]) -> Result<SusceptanceMatrix> {
    build_susceptance_with(grid, devices, BuildOptions::default())
}

pub fn build_susceptance_with(
    grid: &GridSpec,
    devices: &[DeviceSpec],
    opts: BuildOptions,
) -> Result<SusceptanceMatrix> {
    ensure(!devices.is_empty(), || "no devices".into())?;
    let dev_buses: Vec<String> = devices.iter().map(|d| d.bus.clone()).collect();
    let (dev, passive) = bus_order(grid, &dev_buses)?;
    let mut order = dev.clone();
    order.extend(passive.iter().cloned());
    let mut full = full_susceptance(grid, &order)?;
    if opts.include_filter_shunt {
        for (i, d) in devices.iter().enumerate() {
            full.b[(i, i)] -= d.model.c_f;
        }
    }
    let reduced = kron_reduce(&full, &passive)?;
    reduced.check_structure()?;
    Ok(reduced)
}

/// Eliminates `passive` buses by Schur complement, keeping the remaining buses in order.
pub fn kron_reduce(full: &SusceptanceMatrix, passive: &[String]) -> Result<SusceptanceMatrix> {
    let idx = |id: &String| {
        full.buses
            .iter()
            .position(|b| b == id)
            .ok_or_else(|| Error::Validation(format!("passive bus {id:?} not in matrix")))
    };
    let e: Vec<usize> = passive.iter().map(idx).collect::<Result<_>>()?;
    let k: Vec<usize> = (0..full.n()).filter(|i| !e.contains(i)).collect();
    let keep_ids: Vec<String> = k.iter().map(|&i| full.buses[i].clone()).collect();
    let bkk = Mat::from_fn(k.len(), k.len(), |a, b| full.b[(k[a], k[b])]);
    if e.is_empty() {
        return Ok(SusceptanceMatrix::from_mat_unchecked(keep_ids, bkk));
    }
    let bee = Mat::from_fn(e.len(), e.len(), |a, b| full.b[(e[a], e[b])]);
    let bek = Mat::from_fn(e.len(), k.len(), |a, b| full.b[(e[a], k[b])]);
    let chol = bee
        .llt(Side::Lower)
        .map_err(|_| Error::Elimination("passive block is singular (no path to ground or devices)".into()))?;
    use faer::linalg::solvers::Solve;
    let x = chol.solve(&bek);
    let s = &bkk - bek.transpose() * &x;
    // Re-symmetrize to remove rounding asymmetry.
    let s = Mat::from_fn(k.len(), k.len(), |a, b| 0.5 * (s[(a, b)] + s[(b, a)]));
    Ok(SusceptanceMatrix::from_mat_unchecked(keep_ids, s))
}

/// Operating-point weighting used for `J_eqo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `diag(U_i / P_bi)·B`.
    PerUnitPower,
    /// `diag(U_i / (P_bi·S_Bi))·B`.
    #[default]
    AbsolutePower,
}

/// A matrix of the form `diag(weights)·B`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedJacobian {
    pub weights: Vec<f64>,
    pub susceptance: SusceptanceMatrix,
}

impl WeightedJacobian {
    pub fn new(weights: Vec<f64>, susceptance: SusceptanceMatrix) -> Result<Self> {
        ensure(weights.len() == susceptance.n(), || {
            format!("{} weights for a {}-bus matrix", weights.len(), susceptance.n())
        })?;
        for (i, w) in weights.iter().enumerate() {
            ensure(w.is_finite() && *w > 0.0, || format!("weight {i} is not positive ({w})"))?;
        }
        Ok(WeightedJacobian { weights, susceptance })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn matrix(&self) -> Mat<f64> {
        let n = self.n();
        Mat::from_fn(n, n, |i, j| self.weights[i] * self.susceptance.get(i, j))
    }
}

/// `J_eq = diag(1/S_Bi)·B`.
pub fn extended_jacobian(b: &SusceptanceMatrix, devices: &[DeviceSpec]) -> Result<WeightedJacobian> {
    ensure(devices.len() == b.n(), || format!("{} devices for a {}-bus matrix", devices.len(), b.n()))?;
    let w = devices
        .iter()
        .map(|d| {
            ensure(d.s_b > 0.0 && d.s_b.is_finite(), || format!("S_B of device {:?} not positive", d.bus))?;
            Ok(1.0 / d.s_b)
        })
        .collect::<Result<Vec<_>>>()?;
    WeightedJacobian::new(w, b.clone())
}

/// `J_eqo` under the chosen weighting. Terminal voltages come from `op`.
pub fn operation_jacobian(
    b: &SusceptanceMatrix,
    devices: &[DeviceSpec],
    op: &OperatingPoint,
    weighting: Weighting,
) -> Result<WeightedJacobian> {
    ensure(devices.len() == b.n() && op.n() == b.n(), || "dimension mismatch".into())?;
    let w = devices
        .iter()
        .zip(&op.u)
        .map(|(d, &u)| {
            let p = match weighting {
                Weighting::PerUnitPower => d.p_b,
                Weighting::AbsolutePower => d.p_b * d.s_b,
            };
            ensure(p > 0.0 && p.is_finite(), || {
                format!("device {:?}: operating power must be positive, got {p}", d.bus)
            })?;
            Ok(u / p)
        })
        .collect::<Result<Vec<_>>>()?;
    WeightedJacobian::new(w, b.clone())
}

/// Per-device operating values on the system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Active power injected into the network, `P_i`.
    pub p: Vec<f64>,
    /// Reactive power injected into the network, `Q_i`.
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    /// Voltage angles relative to the ground reference; `None` means flat.
    pub theta: Option<Vec<f64>>,
}

impl OperatingPoint {
    /// Rated powers at the declared voltages with flat angles.
    pub fn rated(devices: &[DeviceSpec]) -> Self {
        OperatingPoint {
            p: devices.iter().map(|d| d.p_b * d.s_b).collect(),
            q: devices.iter().map(|d| d.q_b * d.s_b).collect(),
            u: devices.iter().map(|d| d.u).collect(),
            theta: None,
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.theta.clone().unwrap_or_else(|| vec![0.0; self.n()])
    }

    /// `max − min` over the device angles and the reference angle 0.
    pub fn theta_spread(&self) -> f64 {
        let t = self.angles();
        let hi = t.iter().cloned().fold(0.0, f64::max);
        let lo = t.iter().cloned().fold(0.0, f64::min);
        hi - lo
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        ensure(self.p.len() == n && self.q.len() == n && self.u.len() == n, || {
            format!("operating point has wrong length (expected {n})")
        })?;
        if let Some(t) = &self.theta {
            ensure(t.len() == n, || "angle vector has wrong length".into())?;
        }
        ensure(self.u.iter().all(|u| u.is_finite() && *u > 0.0), || "U must be positive".into())
    }

    /// Injections implied by the given voltages, with the ground reference as the
    /// infinite bus at `1∠0`.
    pub fn from_angles(b: &SusceptanceMatrix, u: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        ensure(u.len() == b.n() && theta.len() == b.n(), || "dimension mismatch".into())?;
        let (p, q) = network_flows(b, &u, &theta);
        Ok(OperatingPoint { p, q, u, theta: Some(theta) })
    }

    /// Newton power flow for given injections; all device buses are PQ buses and
    /// the ground reference is the slack.
    pub fn solve_power_flow(b: &SusceptanceMatrix, p: &[f64], q: &[f64]) -> Result<Self> {
        let n = b.n();
        ensure(p.len() == n && q.len() == n, || "dimension mismatch".into())?;
        let mut th = vec![0.0; n];
        let mut u = vec![1.0; n];
        for _ in 0..60 {
            let (pf, qf) = network_flows(b, &u, &th);
            let mut f: Vec<f64> = (0..n).map(|i| pf[i] - p[i]).collect();
            f.extend((0..n).map(|i| qf[i] - q[i]));
            let err = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if err < 1e-12 {
                return Ok(OperatingPoint { p: pf, q: qf, u, theta: Some(th) });
            }
            let jac = flow_jacobian(b, &u, &th);
            let lu = jac.partial_piv_lu();
            use faer::linalg::solvers::Solve;
            let rhs = Mat::from_fn(2 * n, 1, |i, _| f[i]);
            let dx = lu.solve(&rhs);
            for i in 0..n {
                th[i] -= dx[(i, 0)];
                u[i] -= dx[(n + i, 0)];
            }
            if th.iter().chain(&u).any(|x| !x.is_finite()) || u.iter().any(|&x| x <= 0.0) {
                break;
            }
        }
        Err(Error::Numerical("power flow did not converge".into()))
    }

    /// Largest mismatch between the stored injections and those implied by the
    /// stored voltages. Zero for flat points, which are taken as given.
    pub fn balance_residual(&self, b: &SusceptanceMatrix) -> f64 {
        match &self.theta {
            None => 0.0,
            Some(t) => {
                let (pf, qf) = network_flows(b, &self.u, t);
                pf.iter().zip(&self.p).chain(qf.iter().zip(&self.q)).fold(0.0, |m, (a, c)| m.max((a - c).abs()))
            }
        }
    }
}

/// `(P_i, Q_i)` injected at each bus for voltages `U∠θ`, ground at `1∠0`.
pub fn network_flows(b: &SusceptanceMatrix, u: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = b.n();
    let g = b.grounding();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        p[i] = g[i] * u[i] * theta[i].sin();
        q[i] = b.get(i, i) * u[i] * u[i] - g[i] * u[i] * theta[i].cos();
        for k in 0..n {
            if k != i {
                let bik = -b.get(i, k);
                let d = theta[i] - theta[k];
                p[i] += bik * u[i] * u[k] * d.sin();
                q[i] -= bik * u[i] * u[k] * d.cos();
            }
        }
    }
    (p, q)
}

/// Jacobian of `(P, Q)` with respect to `(θ, U)`.
fn flow_jacobian(b: &SusceptanceMatrix, u: &[f64], th: &[f64]) -> Mat<f64> {
    let n = b.n();
    let g = b.grounding();
    let mut j = Mat::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (s0, c0) = th[i].sin_cos();
        j[(i, i)] = g[i] * u[i] * c0;
        j[(i, n + i)] = g[i] * s0;
        j[(n + i, i)] = g[i] * u[i] * s0;
        j[(n + i, n + i)] = 2.0 * b.get(i, i) * u[i] - g[i] * c0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let bik = -b.get(i, k);
            let (s, c) = (th[i] - th[k]).sin_cos();
            j[(i, i)] += bik * u[i] * u[k] * c;
            j[(i, k)] = -bik * u[i] * u[k] * c;
            j[(i, n + i)] += bik * u[k] * s;
            j[(i, n + k)] = bik * u[i] * s;
            j[(n + i, i)] += bik * u[i] * u[k] * s;
            j[(n + i, k)] = -bik * u[i] * u[k] * s;
            j[(n + i, n + i)] -= bik * u[k] * c;
            j[(n + i, n + k)] = -bik * u[i] * c;
        }
    }
    j
}

/// A validated grid with its devices and reduced susceptance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub grid: GridSpec,
    pub devices: Vec<DeviceSpec>,
    pub b: SusceptanceMatrix,
}

impl System {
    pub fn new(grid: GridSpec, devices: Vec<DeviceSpec>) -> Result<Self> {
        Self::with_options(grid, devices, BuildOptions::default())
    }

    pub fn with_options(grid: GridSpec, devices: Vec<DeviceSpec>, opts: BuildOptions) -> Result<Self> {
        for d in &devices {
            d.validate()?;
            ensure((d.model.base_frequency - grid.base_frequency).abs() <= 1e-12 * grid.base_frequency, || {
                format!(
                    "device {:?} base frequency {} differs from grid {}",
                    d.bus, d.model.base_frequency, grid.base_frequency
                )
            })?;
        }
        let b = build_susceptance_with(&grid, &devices, opts)?;
        Ok(System { grid, devices, b })
    }

    pub fn n(&self) -> usize {
        self.devices.len()
    }

    pub fn omega0(&self) -> f64 {
        self.grid.omega0()
    }

    pub fn rated_op(&self) -> OperatingPoint {
        OperatingPoint::rated(&self.devices)
    }

    /// Grid buses without a device, in grid order.
    pub fn passive_buses(&self) -> Vec<String> {
        self.grid.buses.iter().filter(|b| !self.devices.iter().any(|d| &d.bus == *b)).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn dev(bus: &str, s_b: f64, p_b: f64) -> DeviceSpec {
        DeviceSpec::new(bus, s_b, p_b, DeviceModel::reference(0.037, 1.0))
    }

    fn grid_as_printed() -> GridSpec {
        let r = Branch::reactance;
        GridSpec::new(
            &["1", "2", "3", "4", "5"],
            vec![
                r("1", "0", 0.2),
                r("1", "2", 0.15),
                r("1", "3", 0.1),
                r("1", "4", 0.06),
                r("1", "5", 0.09),
                r("2", "0", 0.15),
                r("2", "3", 0.18),
                r("2", "4", 0.2),
                r("2", "5", 0.21),
                r("3", "0", 0.25),
                r("3", "4", 0.07),
                r("3", "5", 0.05),
                r("4", "0", 0.1),
                r("4", "5", 0.11),
                r("5", "0", 0.2),
            ],
        )
    }

    #[test]
    fn single_grounding_branch() {
        let g = GridSpec::new(&["1"], vec![Branch::reactance("1", "0", 0.5)]);
        let b = build_susceptance(&g, &[dev("1", 1.0, 1.0)]).unwrap();
        assert_relative_eq!(b.get(0, 0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn reference_grid_hand_sums() {
        let g = grid_as_printed();
        let devs: Vec<_> = ["1", "2", "3", "4", "5"].iter().map(|b| dev(b, 1.0, 1.0)).collect();
        let b = build_susceptance(&g, &devs).unwrap();
        let b11 = 1.0 / 0.2 + 1.0 / 0.15 + 1.0 / 0.1 + 1.0 / 0.06 + 1.0 / 0.09;
        assert_relative_eq!(b.get(0, 0), b11, max_relative = 1e-14);
        assert_relative_eq!(b.get(0, 0), 49.444, epsilon = 1e-3);
        assert_relative_eq!(b.get(0, 1), -1.0 / 0.15, max_relative = 1e-14);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(b.get(i, j), b.get(j, i));
            }
        }
        let ground = [1.0 / 0.2, 1.0 / 0.15, 1.0 / 0.25, 1.0 / 0.1, 1.0 / 0.2];
        for (gs, want) in b.grounding().iter().zip(ground) {
            assert_relative_eq!(*gs, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn kron_empty_is_identity() {
        let g = grid_as_printed();
        let order: Vec<String> = g.buses.clone();
        let full = full_susceptance(&g, &order).unwrap();
        let red = kron_reduce(&full, &[]).unwrap();
        assert_eq!(red, full);
    }

    #[test]
    fn star_through_passive_bus() {
        // devices 1,2 each tied to passive bus 3 with b = 2; bus 3 has no ground of
        // its own, so grounding comes from device 1.
        let g = GridSpec::new(
            &["1", "2", "3"],
            vec![
                Branch::susceptance("1", "3", 2.0),
                Branch::susceptance("2", "3", 2.0),
                Branch::susceptance("1", "0", 1.0),
            ],
        );
        let b = build_susceptance(&g, &[dev("1", 1.0, 1.0), dev("2", 1.0, 1.0)]).unwrap();
        // [[3,0],[0,2]] - (1/4)[[4,4],[4,4]]
        let want = [[2.0, -1.0], [-1.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(b.get(i, j), want[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn series_shunt_reduction_matches_formula() {
        let (bb, gg) = (3.0, 0.7);
        let g = GridSpec::new(
            &["1", "2", "m"],
            vec![
                Branch::susceptance("1", "m", bb),
                Branch::susceptance("2", "m", bb),
                Branch::susceptance("m", "0", gg),
            ],
        );
        let b = build_susceptance(&g, &[dev("1", 1.0, 1.0), dev("2", 1.0, 1.0)]).unwrap();
        let series = bb * bb / (2.0 * bb + gg);
        assert_relative_eq!(-b.get(0, 1), series, epsilon = 1e-12);
        // Analytically reduced network: direct tie plus a grounding shunt per bus.
        let shunt = bb * gg / (2.0 * bb + gg);
        let g2 = GridSpec::new(
            &["1", "2"],
            vec![
                Branch::susceptance("1", "2", series),
                Branch::susceptance("1", "0", shunt),
                Branch::susceptance("2", "0", shunt),
            ],
        );
        let b2 = build_susceptance(&g2, &[dev("1", 1.0, 1.0), dev("2", 1.0, 1.0)]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(b.get(i, j), b2.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn topology_errors() {
        let no_ground = GridSpec::new(&["1", "2"], vec![Branch::reactance("1", "2", 0.1)]);
        assert!(matches!(no_ground.validate(), Err(Error::Singular(_))));
        let island =
            GridSpec::new(&["1", "2", "3"], vec![Branch::reactance("1", "0", 0.1), Branch::reactance("2", "3", 0.1)]);
        assert!(matches!(island.validate(), Err(Error::Topology(_))));
        let neg = GridSpec::new(&["1"], vec![Branch::reactance("1", "0", -0.1)]);
        assert!(matches!(neg.validate(), Err(Error::Validation(_))));
        let dangling = GridSpec::new(&["1"], vec![Branch::reactance("1", "9", 0.1)]);
        assert!(matches!(dangling.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn jacobian_weightings() {
        let g = grid_as_printed();
        let devs: Vec<_> = ["1", "2", "3", "4", "5"].iter().map(|b| dev(b, 2.0, 1.0)).collect();
        let b = build_susceptance(&g, &devs).unwrap();
        let jeq = extended_jacobian(&b, &devs).unwrap();
        assert_relative_eq!(jeq.matrix()[(0, 0)], b.get(0, 0) / 2.0);
        // P_b = 1/S_B... identity weighting when P_i = S_B, U = 1 under per-unit power
        let devs1: Vec<_> = ["1", "2", "3", "4", "5"].iter().map(|bu| dev(bu, 2.0, 2.0)).collect();
        let op = OperatingPoint::rated(&devs1);
        let jo = operation_jacobian(&b, &devs1, &op, Weighting::PerUnitPower).unwrap();
        assert_eq!(jo.weights, jeq.weights);
        let mut bad = devs.clone();
        bad[2].p_b = 0.0;
        let op = OperatingPoint::rated(&bad);
        assert!(operation_jacobian(&b, &bad, &op, Weighting::AbsolutePower).is_err());
    }

    #[test]
    fn power_flow_round_trip() {
        let g = grid_as_printed();
        let devs: Vec<_> = ["1", "2", "3", "4", "5"].iter().map(|bu| dev(bu, 1.0, 1.0)).collect();
        let b = build_susceptance(&g, &devs).unwrap();
        let p = [0.8, 0.7, 0.9, 1.0, 0.5];
        let op = OperatingPoint::solve_power_flow(&b, &p, &[0.0; 5]).unwrap();
        assert!(op.balance_residual(&b) < 1e-10);
        for (a, c) in op.p.iter().zip(p) {
            assert_relative_eq!(*a, c, epsilon = 1e-10);
        }
        let again = OperatingPoint::from_angles(&b, op.u.clone(), op.theta.clone().unwrap()).unwrap();
        assert!(again.balance_residual(&b) < 1e-14);
        // DC power flow B·θ ≈ P is a close first-order estimate at these loadings.
        let chol = b.matrix().llt(faer::Side::Lower).unwrap();
        let rhs = Mat::from_fn(5, 1, |i, _| p[i]);
        let dc = faer::linalg::solvers::Solve::solve(&chol, &rhs);
        let th = op.theta.as_ref().unwrap();
        for i in 0..5 {
            assert!((th[i] - dc[(i, 0)]).abs() < 0.02 * dc[(i, 0)] + 1e-3);
        }
        let max = th.iter().cloned().fold(0.0, f64::max);
        assert_relative_eq!(op.theta_spread(), max, epsilon = 1e-15);
    }

    #[test]
    fn flat_flows_are_zero() {
        let g = grid_as_printed();
        let devs: Vec<_> = ["1", "2", "3", "4", "5"].iter().map(|bu| dev(bu, 1.0, 1.0)).collect();
        let b = build_susceptance(&g, &devs).unwrap();
        let (p, q) = network_flows(&b, &[1.0; 5], &[0.0; 5]);
        assert!(p.iter().chain(&q).all(|x| x.abs() < 1e-12));
    }
}
