//! Voltage-source converter admittance and Jacobian transfer functions, plus the
//! frequency coefficients `α(s)`, `β(s)` of the inductive network.

use serde::{Deserialize, Serialize};

use super::poly::Poly;
use super::rational::RationalFn;
use super::transfer::TransferMatrix;
use crate::error::ensure;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Pq,
    DcVoltage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

impl PiGains {
    pub const fn new(kp: f64, ki: f64) -> Self {
        PiGains { kp, ki }
    }

    /// `kp + ki/s`.
    pub fn tf(&self) -> RationalFn {
        RationalFn::pi(self.kp, self.ki)
    }

    fn finite(&self) -> bool {
        self.kp.is_finite() && self.ki.is_finite()
    }
}

fn fifty() -> f64 {
    50.0
}

/// Per-unit converter model. `l_f` is the filter reactance at nominal frequency;
/// the s-domain inductance is `l_f/ω0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub control_mode: ControlMode,
    pub current: PiGains,
    /// PI block inside `H_pll = (kp + ki/s)/s`.
    pub pll: PiGains,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PiGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_voltage: Option<PiGains>,
    pub l_f: f64,
    #[serde(default)]
    pub c_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_dc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_dc: Option<f64>,
    #[serde(default = "fifty")]
    pub base_frequency: f64,
}

impl DeviceModel {
    /// dc-voltage-controlled converter with the reference gains
    /// (`H_dc = 0.2 + 200/s`, `H_i = 0.6 + 15/s`, PLL PI `2 + 3020/s`,
    /// `L_f = C_f = 0.05`). The dc link is not part of that data set and must be
    /// supplied.
    pub fn reference(c_dc: f64, u_dc: f64) -> Self {
        DeviceModel {
            control_mode: ControlMode::DcVoltage,
            current: PiGains::new(0.6, 15.0),
            pll: PiGains::new(2.0, 3020.0),
            power: None,
            dc_voltage: Some(PiGains::new(0.2, 200.0)),
            l_f: 0.05,
            c_f: 0.05,
            c_dc: Some(c_dc),
            u_dc: Some(u_dc),
            base_frequency: 50.0,
        }
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.base_frequency
    }

    /// Filter inductance in per-unit seconds.
    pub fn inductance(&self) -> f64 {
        self.l_f / self.omega0()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.current.finite() && self.pll.finite(), || "non-finite controller gain".into())?;
        ensure(self.l_f.is_finite() && self.l_f > 0.0, || format!("L_f must be positive, got {}", self.l_f))?;
        ensure(self.base_frequency > 0.0, || "base frequency must be positive".into())?;
        match self.control_mode {
            ControlMode::DcVoltage => {
                let g = self
                    .dc_voltage
                    .ok_or_else(|| Error::Validation("dc_voltage mode requires dc-voltage controller gains".into()))?;
                ensure(g.finite(), || "non-finite dc-voltage gain".into())?;
                match (self.c_dc, self.u_dc) {
                    (Some(c), Some(u)) if c > 0.0 && u > 0.0 && c.is_finite() && u.is_finite() => Ok(()),
                    _ => Err(Error::Validation("dc_voltage mode requires positive C_dc and U_dc".into())),
                }
            }
            ControlMode::Pq => {
                let g =
                    self.power.ok_or_else(|| Error::Validation("pq mode requires power controller gains".into()))?;
                ensure(g.finite(), || "non-finite power gain".into())
            }
        }
    }

    /// `H_pll(s) = (kp + ki/s)/s`.
    pub fn h_pll(&self) -> RationalFn {
        &self.pll.tf() * &RationalFn::new(Poly::one(), Poly::monomial(1, 1.0)).unwrap()
    }
}

/// Diagonal converter admittance in polar coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VscAdmittance {
    pub y11: RationalFn,
    pub y22: RationalFn,
}

impl VscAdmittance {
    pub fn as_matrix(&self) -> TransferMatrix {
        TransferMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => self.y11.clone(),
            (1, 1) => self.y22.clone(),
            _ => RationalFn::zero(),
        })
    }
}

/// Converter admittance at terminal voltage `u`.
pub fn vsc_admittance(model: &DeviceModel, u: f64) -> Result<VscAdmittance> {
    model.validate()?;
    ensure(u > 0.0 && u.is_finite(), || format!("U must be positive, got {u}"))?;
    let sl = RationalFn::from_poly(Poly::monomial(1, model.inductance()));
    let hi = model.current.tf();
    let hpll = model.h_pll();
    let one = RationalFn::one();
    let pll_loop = &one + &hpll.scale(u);
    match model.control_mode {
        ControlMode::DcVoltage => {
            let hdc = model.dc_voltage.unwrap().tf();
            let (c, udc) = (model.c_dc.unwrap(), model.u_dc.unwrap());
            let s = RationalFn::from_poly(Poly::monomial(1, udc * c));
            let hh = &hi * &hdc;
            let inner = &sl + &hi;
            let y11 = -(&hh / &(&(&s * &inner) + &hh.scale(u)));
            let y22 = &(&hi * &hpll) / &(&inner * &pll_loop);
            Ok(VscAdmittance { y11, y22 })
        }
        ControlMode::Pq => {
            let hp = model.power.unwrap().tf();
            let hh = &hp * &hi;
            let d = &(&hh.scale(u) + &hi) + &sl;
            let y11 = -(&hh / &d);
            let a = &(&hh - &(&sl * &hpll)) / &(&d * &pll_loop);
            let b = &hpll / &pll_loop;
            Ok(VscAdmittance { y11, y22: &a + &b })
        }
    }
}

/// Device Jacobian on its own base at unity power factor:
/// `[[0, P_b(1 + U·Y11)], [P_b(1 − U·Y22), 0]]`, mapping `(Δθ, ΔU/U)` to `(ΔP, ΔQ)`.
pub fn vsc_jacobian(model: &DeviceModel, p_b: f64, q_b: f64, u: f64) -> Result<TransferMatrix> {
    if q_b.abs() > 1e-9 {
        return Err(Error::UnsupportedOperatingPoint(format!(
            "converter Jacobian assumes unity power factor, got Q_b = {q_b}"
        )));
    }
    let y = vsc_admittance(model, u)?;
    let one = RationalFn::one();
    let g_pu = (&one + &y.y11.scale(u)).scale(p_b);
    let g_qt = (&one - &y.y22.scale(u)).scale(p_b);
    Ok(TransferMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => g_pu.clone(),
        (1, 0) => g_qt.clone(),
        _ => RationalFn::zero(),
    }))
}

/// `α(s) = 1/((s/ω0)² + 1)` and `β(s) = (s/ω0)/((s/ω0)² + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFrequencyCoeffs {
    pub omega0: f64,
    pub alpha: RationalFn,
    pub beta: RationalFn,
}

impl NetworkFrequencyCoeffs {
    pub fn new(omega0: f64) -> Self {
        let den = Poly::new(vec![omega0 * omega0, 0.0, 1.0]);
        NetworkFrequencyCoeffs {
            omega0,
            alpha: RationalFn::new(Poly::constant(omega0 * omega0), den.clone()).unwrap(),
            beta: RationalFn::new(Poly::monomial(1, omega0), den).unwrap(),
        }
    }

    pub fn from_hz(f0: f64) -> Self {
        Self::new(2.0 * std::f64::consts::PI * f0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    const W0: f64 = 100.0 * std::f64::consts::PI;

    /// Direct complex evaluation of the printed admittance formulas.
    fn y_dc_direct(m: &DeviceModel, u: f64, s: Complex64) -> (Complex64, Complex64) {
        let pi = |g: PiGains| g.kp + g.ki / s;
        let hi = pi(m.current);
        let hdc = pi(m.dc_voltage.unwrap());
        let hpll = pi(m.pll) / s;
        let l = m.l_f / W0;
        let (c, udc) = (m.c_dc.unwrap(), m.u_dc.unwrap());
        let y11 = -(hi * hdc) / (udc * c * s * (s * l + hi) + hi * hdc * u);
        let y22 = hi * hpll / ((s * l + hi) * (1.0 + u * hpll));
        (y11, y22)
    }

    fn y_pq_direct(m: &DeviceModel, u: f64, s: Complex64) -> (Complex64, Complex64) {
        let pi = |g: PiGains| g.kp + g.ki / s;
        let hi = pi(m.current);
        let hp = pi(m.power.unwrap());
        let hpll = pi(m.pll) / s;
        let l = m.l_f / W0;
        let d = hp * hi * u + hi + s * l;
        let y11 = -hp * hi / d;
        let y22 = (hp * hi - s * l * hpll) / (d * (1.0 + u * hpll)) + hpll / (1.0 + u * hpll);
        (y11, y22)
    }

    fn pq_model() -> DeviceModel {
        DeviceModel {
            control_mode: ControlMode::Pq,
            power: Some(PiGains::new(0.5, 40.0)),
            dc_voltage: None,
            c_dc: None,
            u_dc: None,
            ..DeviceModel::reference(1.0, 1.0)
        }
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn dc_admittance_matches_direct_formula() {
        let m = DeviceModel::reference(0.037, 1.0);
        let y = vsc_admittance(&m, 1.0).unwrap();
        for s in [Complex64::new(0.0, 50.0), Complex64::new(-3.0, 120.0), Complex64::new(2.0, -7.0)] {
            let (a, b) = y_dc_direct(&m, 1.0, s);
            assert!(rel(y.y11.eval(s).unwrap(), a) < 1e-12);
            assert!(rel(y.y22.eval(s).unwrap(), b) < 1e-12);
        }
        assert_eq!(y.y11.den().degree(), 4);
        assert_eq!(y.y22.den().degree(), 4);
    }

    #[test]
    fn pq_admittance_matches_direct_formula() {
        let m = pq_model();
        let y = vsc_admittance(&m, 1.02).unwrap();
        for s in [Complex64::new(0.0, 50.0), Complex64::new(-1.0, 300.0), Complex64::new(5.0, 2.0)] {
            let (a, b) = y_pq_direct(&m, 1.02, s);
            assert!(rel(y.y11.eval(s).unwrap(), a) < 1e-10);
            assert!(rel(y.y22.eval(s).unwrap(), b) < 1e-10);
        }
    }

    #[test]
    fn pq_low_frequency_limit() {
        let m = pq_model();
        let u = 1.05;
        let y = vsc_admittance(&m, u).unwrap();
        let v = y.y11.eval(Complex64::new(1e-7, 0.0)).unwrap();
        assert!((v.re + 1.0 / u).abs() < 1e-6);
    }

    #[test]
    fn proportional_only_gains() {
        let mut m = DeviceModel::reference(0.04, 1.0);
        m.current.ki = 0.0;
        m.dc_voltage = Some(PiGains::new(0.2, 0.0));
        m.pll.ki = 0.0;
        let y = vsc_admittance(&m, 1.0).unwrap();
        let s = Complex64::new(0.5, 30.0);
        let l = m.l_f / W0;
        let (kpi, kdc, kpll) = (0.6, 0.2, 2.0);
        let y11 = -(kpi * kdc) / (0.04 * s * (s * l + kpi) + kpi * kdc);
        let y22 = kpi * kpll / s / ((s * l + kpi) * (1.0 + kpll / s));
        assert!(rel(y.y11.eval(s).unwrap(), y11) < 1e-12);
        assert!(rel(y.y22.eval(s).unwrap(), y22) < 1e-12);
    }

    #[test]
    fn jacobian_structure() {
        let m = DeviceModel::reference(0.037, 1.0);
        let j = vsc_jacobian(&m, 0.8, 0.0, 1.0).unwrap();
        assert!(j.get(0, 0).is_zero() && j.get(1, 1).is_zero());
        let zero = vsc_jacobian(&m, 0.0, 0.0, 1.0).unwrap();
        assert!(zero.entries().iter().all(RationalFn::is_zero));
        assert!(matches!(vsc_jacobian(&m, 1.0, 0.2, 1.0), Err(Error::UnsupportedOperatingPoint(_))));
    }

    #[test]
    fn jacobian_zero_where_admittance_cancels() {
        // (1,2) entry is P(1 + U·Y11): its numerator is U·n11 + d11.
        let m = DeviceModel::reference(0.037, 1.0);
        let y = vsc_admittance(&m, 1.0).unwrap();
        let z = (y.y11.den() + y.y11.num()).roots();
        let j = vsc_jacobian(&m, 1.0, 0.0, 1.0).unwrap();
        for r in z {
            assert!(j.get(0, 1).eval(r).unwrap().norm() < 1e-8);
        }
    }

    #[test]
    fn alpha_beta_identity() {
        let c = NetworkFrequencyCoeffs::new(W0);
        let lhs = &(&c.alpha * &c.alpha) + &(&c.beta * &c.beta);
        assert_eq!(lhs.num().degree(), c.alpha.num().degree());
        assert_eq!(lhs.den().degree(), c.alpha.den().degree());
        assert!(lhs.approx_eq(&c.alpha, 1e-14));
        assert_eq!(c.alpha.eval(Complex64::new(0.0, 0.0)).unwrap().re, 1.0);
        assert_eq!(c.beta.eval(Complex64::new(0.0, 0.0)).unwrap().norm(), 0.0);
    }

    #[test]
    fn dc_mode_requires_dc_link() {
        let mut m = DeviceModel::reference(0.037, 1.0);
        m.c_dc = None;
        assert!(vsc_admittance(&m, 1.0).is_err());
        m.c_dc = Some(0.03);
        m.l_f = 0.0;
        assert!(vsc_admittance(&m, 1.0).is_err());
    }
}
