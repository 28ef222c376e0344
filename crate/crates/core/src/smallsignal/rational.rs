//! Rational functions of `s` with real coefficients.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poly::Poly;
use crate::{Error, Result};

/// Relative root distance under which a numerator and denominator root cancel.
pub const CANCEL_TOL: f64 = 1e-8;

/// `num(s)/den(s)` with common factors cancelled and a monic denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFn {
    num: Poly,
    den: Poly,
}

impl RationalFn {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Validation("rational function with zero denominator".into()));
        }
        Ok(Self::reduced(num, den))
    }

    /// Builds without cancelling common roots (still strips shared powers of `s`).
    pub fn new_uncancelled(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Validation("rational function with zero denominator".into()));
        }
        Ok(Self::normalized(num, den))
    }

    pub fn from_poly(p: Poly) -> Self {
        RationalFn { num: p, den: Poly::one() }
    }

    pub fn constant(a: f64) -> Self {
        Self::from_poly(Poly::constant(a))
    }

    pub fn zero() -> Self {
        Self::from_poly(Poly::zero())
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// PI block `kp + ki/s`.
    pub fn pi(kp: f64, ki: f64) -> Self {
        Self::reduced(Poly::linear(kp, ki), Poly::monomial(1, 1.0))
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let d = self.den.eval(s);
        if d.norm() <= 1e-14 * self.den.magnitude_at(s.norm()) {
            return Err(Error::PoleEvaluation(s));
        }
        Ok(self.num.eval(s) / d)
    }

    pub fn scale(&self, a: f64) -> Self {
        if a == 0.0 {
            return Self::zero();
        }
        RationalFn { num: self.num.scale(a), den: self.den.clone() }
    }

    pub fn recip(&self) -> Result<Self> {
        Self::new(self.den.clone(), self.num.clone())
    }

    /// Equality up to `tol`, judged on cross-multiplied coefficients.
    pub fn approx_eq(&self, o: &RationalFn, tol: f64) -> bool {
        let a = &self.num * &o.den;
        let b = &o.num * &self.den;
        let diff = &a - &b;
        let scale = a.coeffs().iter().chain(b.coeffs()).fold(0.0f64, |m, x| m.max(x.abs()));
        diff.coeffs().iter().all(|x| x.abs() <= tol * scale.max(f64::MIN_POSITIVE))
    }

    fn normalized(num: Poly, den: Poly) -> Self {
        if num.is_zero() {
            return RationalFn { num, den: Poly::one() };
        }
        let k = num.zero_order().min(den.zero_order());
        let (num, den) = (num.div_s_pow(k), den.div_s_pow(k));
        let lead = den.leading();
        RationalFn { num: num.scale(1.0 / lead), den: den.scale(1.0 / lead) }
    }

    fn reduced(num: Poly, den: Poly) -> Self {
        let r = Self::normalized(num, den);
        let (num, den) = cancel_common_roots(r.num, r.den);
        Self::normalized(num, den)
    }
}

fn small_at(p: &Poly, r: Complex64) -> bool {
    p.eval(r).norm() <= 1e-11 * p.magnitude_at(r.norm())
}

/// Removes factors shared by `num` and `den`, one root (or conjugate pair) at a time.
fn cancel_common_roots(mut num: Poly, mut den: Poly) -> (Poly, Poly) {
    'outer: loop {
        if num.degree() == 0 || den.degree() == 0 {
            return (num, den);
        }
        let nr = num.roots();
        for &r in nr.iter().filter(|r| r.im >= 0.0) {
            if small_at(&den, r) {
                num = num.deflate(r);
                den = den.deflate(r);
                continue 'outer;
            }
        }
        let dr = den.roots();
        for &r in dr.iter().filter(|r| r.im >= 0.0) {
            if small_at(&num, r) {
                num = num.deflate(r);
                den = den.deflate(r);
                continue 'outer;
            }
        }
        for &a in nr.iter().filter(|r| r.im >= 0.0) {
            for &b in dr.iter().filter(|r| r.im >= 0.0) {
                if (a - b).norm() <= CANCEL_TOL * a.norm().max(1.0) && (a.im == 0.0) == (b.im == 0.0) {
                    let m = (a + b) * 0.5;
                    num = num.deflate(m);
                    den = den.deflate(m);
                    continue 'outer;
                }
            }
        }
        return (num, den);
    }
}

impl Add for &RationalFn {
    type Output = RationalFn;
    fn add(self, o: &RationalFn) -> RationalFn {
        if self.den == o.den {
            return RationalFn::reduced(&self.num + &o.num, self.den.clone());
        }
        RationalFn::reduced(&self.num * &o.den + &o.num * &self.den, &self.den * &o.den)
    }
}

impl Sub for &RationalFn {
    type Output = RationalFn;
    fn sub(self, o: &RationalFn) -> RationalFn {
        self + &(-o)
    }
}

impl Mul for &RationalFn {
    type Output = RationalFn;
    fn mul(self, o: &RationalFn) -> RationalFn {
        RationalFn::reduced(&self.num * &o.num, &self.den * &o.den)
    }
}

impl Div for &RationalFn {
    type Output = RationalFn;
    /// Panics on division by the zero function.
    fn div(self, o: &RationalFn) -> RationalFn {
        assert!(!o.is_zero(), "division by the zero rational function");
        RationalFn::reduced(&self.num * &o.den, &self.den * &o.num)
    }
}

impl Neg for &RationalFn {
    type Output = RationalFn;
    fn neg(self) -> RationalFn {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for RationalFn {
            type Output = RationalFn;
            fn $f(self, o: RationalFn) -> RationalFn {
                (&self).$f(&o)
            }
        }
        impl $tr<&RationalFn> for RationalFn {
            type Output = RationalFn;
            fn $f(self, o: &RationalFn) -> RationalFn {
                (&self).$f(o)
            }
        }
        impl $tr<RationalFn> for &RationalFn {
            type Output = RationalFn;
            fn $f(self, o: RationalFn) -> RationalFn {
                self.$f(&o)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for RationalFn {
    type Output = RationalFn;
    fn neg(self) -> RationalFn {
        self.scale(-1.0)
    }
}
