//! Real-coefficient polynomials in the Laplace variable, coefficients stored in
//! ascending order.

use std::ops::{Add, Mul, Neg, Sub};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly {
    c: Vec<f64>,
}

impl Poly {
    pub fn new(mut c: Vec<f64>) -> Self {
        while c.last() == Some(&0.0) {
            c.pop();
        }
        Poly { c }
    }

    pub fn zero() -> Self {
        Poly { c: vec![] }
    }

    pub fn one() -> Self {
        Poly::constant(1.0)
    }

    pub fn constant(a: f64) -> Self {
        Poly::new(vec![a])
    }

    /// `a·s^k`.
    pub fn monomial(k: usize, a: f64) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = a;
        Poly::new(c)
    }

    /// `a1·s + a0`.
    pub fn linear(a1: f64, a0: f64) -> Self {
        Poly::new(vec![a0, a1])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree, with the zero polynomial reported as 0.
    pub fn degree(&self) -> usize {
        self.c.len().saturating_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.c.last().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
    }

    pub fn eval_real(&self, s: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &a| acc * s + a)
    }

    /// `Σ |c_k| r^k`, the natural scale for judging `|p(s)|` small at `|s| = r`.
    pub fn magnitude_at(&self, r: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &a| acc * r + a.abs())
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(self.c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect())
    }

    pub fn scale(&self, a: f64) -> Poly {
        Poly::new(self.c.iter().map(|x| x * a).collect())
    }

    /// `p(γ·s)`.
    pub fn scale_var(&self, gamma: f64) -> Poly {
        let mut g = 1.0;
        Poly::new(
            self.c
                .iter()
                .map(|a| {
                    let v = a * g;
                    g *= gamma;
                    v
                })
                .collect(),
        )
    }

    pub fn mul_s_pow(&self, k: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![0.0; k];
        c.extend_from_slice(&self.c);
        Poly { c }
    }

    /// Multiplicity of the root at `s = 0`.
    pub fn zero_order(&self) -> usize {
        self.c.iter().take_while(|&&a| a == 0.0).count()
    }

    /// Divides by `s^k`, dropping the (assumed zero) low coefficients.
    pub fn div_s_pow(&self, k: usize) -> Poly {
        Poly::new(self.c.iter().skip(k).copied().collect())
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::one(), |acc, _| &acc * self)
    }

    /// Polynomial long division.
    pub fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        assert!(!d.is_zero(), "division by the zero polynomial");
        if self.c.len() < d.c.len() {
            return (Poly::zero(), self.clone());
        }
        let mut r = self.c.clone();
        let dn = d.c.len() - 1;
        let lead = d.leading();
        let mut q = vec![0.0; r.len() - dn];
        for k in (0..q.len()).rev() {
            let f = r[k + dn] / lead;
            q[k] = f;
            for (j, &dj) in d.c.iter().enumerate() {
                r[k + j] -= f * dj;
            }
            r[k + dn] = 0.0;
        }
        r.truncate(dn);
        (Poly::new(q), Poly::new(r))
    }

    /// Divides out the real factor `(s − r)` or, for complex `r`, the quadratic
    /// `(s − r)(s − r̄)`. The remainder is discarded.
    pub fn deflate(&self, r: Complex64) -> Poly {
        let f = if r.im == 0.0 { Poly::linear(1.0, -r.re) } else { Poly::new(vec![r.norm_sqr(), -2.0 * r.re, 1.0]) };
        self.div_rem(&f).0
    }

    /// Monic-free reconstruction `lead·Π(s − r_k)`. Roots must be closed under
    /// conjugation; imaginary residue is dropped.
    pub fn from_roots(roots: &[Complex64], lead: f64) -> Poly {
        let mut c = vec![Complex64::new(lead, 0.0)];
        for &r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
            for (k, &a) in c.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= a * r;
            }
            c = next;
        }
        Poly::new(c.into_iter().map(|z| z.re).collect())
    }

    /// All roots, with zero roots exact, the rest from a scaled companion matrix and
    /// polished by Newton steps. Output is conjugate-symmetric.
    pub fn roots(&self) -> Vec<Complex64> {
        let z = self.zero_order();
        let mut out = vec![Complex64::new(0.0, 0.0); z];
        let p = self.div_s_pow(z);
        let m = p.degree();
        if m == 0 {
            return out;
        }
        // Balance the coefficient range by scaling the variable.
        let gamma = (p.c[0].abs() / p.leading().abs()).powf(1.0 / m as f64);
        let gamma = if gamma.is_finite() && gamma > 0.0 { gamma } else { 1.0 };
        let q = p.scale_var(gamma);
        let lead = q.leading();
        let comp = Mat::<f64>::from_fn(m, m, |i, j| {
            if j == m - 1 {
                -q.c[i] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let eig = match comp.eigenvalues() {
            Ok(e) => e,
            Err(_) => return out,
        };
        let dp = p.derivative();
        let polish = |mut r: Complex64| {
            let mut best = p.eval(r).norm();
            for _ in 0..4 {
                let d = dp.eval(r);
                if d.norm() == 0.0 {
                    break;
                }
                let cand = r - p.eval(r) / d;
                let v = p.eval(cand).norm();
                if v < best && cand.re.is_finite() && cand.im.is_finite() {
                    best = v;
                    r = cand;
                } else {
                    break;
                }
            }
            r
        };
        let upper: Vec<Complex64> = eig.iter().filter(|e| e.im > 0.0).map(|e| *e * gamma).collect();
        let lower = eig.iter().filter(|e| e.im < 0.0).count();
        let reals: Vec<Complex64> = eig.iter().filter(|e| e.im == 0.0).map(|e| *e * gamma).collect();
        if upper.len() == lower {
            for r in reals {
                let mut x = polish(r);
                x.im = 0.0;
                out.push(x);
            }
            for r in upper {
                let x = polish(r);
                if x.im.abs() <= 1e-14 * x.norm() {
                    out.push(Complex64::new(x.re, 0.0));
                    out.push(Complex64::new(x.re, 0.0));
                } else {
                    out.push(x);
                    out.push(x.conj());
                }
            }
        } else {
            out.extend(eig.iter().map(|e| polish(*e * gamma)));
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.c.len().max(o.c.len());
        Poly::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let n = self.c.len().max(o.c.len());
        Poly::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![0.0; self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in o.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for Poly {
            type Output = Poly;
            fn $f(self, o: Poly) -> Poly {
                (&self).$f(&o)
            }
        }
        impl $tr<&Poly> for Poly {
            type Output = Poly;
            fn $f(self, o: &Poly) -> Poly {
                (&self).$f(o)
            }
        }
        impl $tr<Poly> for &Poly {
            type Output = Poly;
            fn $f(self, o: Poly) -> Poly {
                self.$f(&o)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn arithmetic() {
        let p = Poly::new(vec![1.0, 2.0]);
        let q = Poly::new(vec![-1.0, 0.0, 3.0]);
        assert_eq!((&p * &q).coeffs(), &[-1.0, -2.0, 3.0, 6.0]);
        assert_eq!((&p + &q).coeffs(), &[0.0, 2.0, 3.0]);
        assert!((&p - &p).is_zero());
        assert_eq!(Poly::new(vec![1.0, 0.0, 0.0]).degree(), 0);
    }

    #[test]
    fn division_is_exact_on_products() {
        let a = Poly::new(vec![3.0, -1.0, 2.0]);
        let b = Poly::new(vec![5.0, 1.0]);
        let (q, r) = (&a * &b).div_rem(&b);
        assert!(r.coeffs().iter().all(|x| x.abs() < 1e-12));
        for (x, y) in q.coeffs().iter().zip(a.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_roots() {
        let r = sorted(Poly::new(vec![5.0, 2.0, 1.0]).roots());
        assert!(close(r[0], Complex64::new(-1.0, -2.0), 1e-13));
        assert!(close(r[1], Complex64::new(-1.0, 2.0), 1e-13));
    }

    #[test]
    fn roots_with_zero_and_wide_range() {
        // s²(s+1e-3)(s+4000)(s² + 2s + 3020)
        let p = Poly::monomial(2, 1.0)
            * Poly::linear(1.0, 1e-3)
            * Poly::linear(1.0, 4000.0)
            * Poly::new(vec![3020.0, 2.0, 1.0]);
        let r = p.roots();
        assert_eq!(r.len(), 6);
        let back = Poly::from_roots(&r, p.leading());
        for (x, y) in back.coeffs().iter().zip(p.coeffs()) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
        }
        assert!(r.iter().any(|z| close(*z, Complex64::new(-1e-3, 0.0), 1e-9)));
    }

    #[test]
    fn deflation_removes_factor() {
        let f = Poly::new(vec![4.0, 0.0, 1.0]);
        let p = &f * &Poly::linear(2.0, 1.0);
        let d = p.deflate(Complex64::new(0.0, 2.0));
        assert!((d.coeff(0) - 1.0).abs() < 1e-14 && (d.coeff(1) - 2.0).abs() < 1e-14);
    }
}
