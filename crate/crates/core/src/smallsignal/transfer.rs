//! Matrices of rational functions and their denominator-cleared polynomial form.

use faer::Mat;
use num_complex::Complex64;

use super::poly::Poly;
use super::rational::RationalFn;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    rows: usize,
    cols: usize,
    e: Vec<RationalFn>,
}

impl TransferMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        TransferMatrix { rows, cols, e: vec![RationalFn::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> RationalFn) -> Self {
        let mut e = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                e.push(f(i, j));
            }
        }
        TransferMatrix { rows, cols, e }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &RationalFn {
        &self.e[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: RationalFn) {
        self.e[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[RationalFn] {
        &self.e
    }

    pub fn eval(&self, s: Complex64) -> Result<Mat<Complex64>> {
        let mut m = Mat::<Complex64>::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.get(i, j).eval(s)?;
            }
        }
        Ok(m)
    }

    pub fn try_add(&self, o: &TransferMatrix) -> Result<TransferMatrix> {
        self.same_shape(o)?;
        Ok(TransferMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) + o.get(i, j)))
    }

    pub fn try_sub(&self, o: &TransferMatrix) -> Result<TransferMatrix> {
        self.same_shape(o)?;
        Ok(TransferMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) - o.get(i, j)))
    }

    pub fn scale(&self, a: f64) -> TransferMatrix {
        TransferMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).scale(a))
    }

    fn same_shape(&self, o: &TransferMatrix) -> Result<()> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(Error::Assembly(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        Ok(())
    }

    /// Every distinct root of every entry denominator.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut dens: Vec<&Poly> = Vec::new();
        for r in &self.e {
            if r.den().degree() > 0 && !dens.contains(&r.den()) {
                dens.push(r.den());
            }
        }
        dens.iter().flat_map(|d| d.roots()).collect()
    }

    /// Multiplies each row by the least common multiple of its denominators,
    /// formed from their roots. The determinant of the result equals
    /// `det(self)` times the recorded cleared polynomial.
    pub fn clear_denominators(&self) -> Result<MatrixPolynomial> {
        if self.rows != self.cols {
            return Err(Error::Assembly("characteristic matrix must be square".into()));
        }
        let m = self.rows;
        let mut entries = vec![vec![Poly::zero(); m]; m];
        let mut cleared_roots = Vec::new();
        for i in 0..m {
            let den_roots: Vec<Vec<Complex64>> = (0..m).map(|j| self.get(i, j).den().roots()).collect();
            let mut lcm: Vec<Complex64> = Vec::new();
            for roots in &den_roots {
                let mut pool = lcm.clone();
                for &r in roots {
                    match pool.iter().position(|&x| same_root(x, r)) {
                        Some(k) => {
                            pool.swap_remove(k);
                        }
                        None => lcm.push(r),
                    }
                }
            }
            for j in 0..m {
                let mut rest = lcm.clone();
                for &r in &den_roots[j] {
                    if let Some(k) = rest.iter().position(|&x| same_root(x, r)) {
                        rest.swap_remove(k);
                    }
                }
                entries[i][j] = self.get(i, j).num() * &Poly::from_roots(&rest, 1.0);
            }
            cleared_roots.extend(lcm);
        }
        let mut mp = MatrixPolynomial::from_entries(&entries)?;
        mp.cleared = Poly::from_roots(&cleared_roots, 1.0);
        mp.cleared_roots = cleared_roots;
        mp.source = Some(self.clone());
        Ok(mp)
    }
}

fn same_root(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= 1e-8 * a.norm().max(1.0)
}

/// `A(s) = Σ A_k s^k` with square real coefficient matrices.
#[derive(Debug, Clone)]
pub struct MatrixPolynomial {
    pub coeffs: Vec<Mat<f64>>,
    /// Product of the factors multiplied in while clearing denominators.
    pub cleared: Poly,
    pub cleared_roots: Vec<Complex64>,
    /// Number of finite eigenvalues when it is known structurally.
    pub finite_count: Option<usize>,
    /// The rational matrix this polynomial was cleared from, if any.
    pub source: Option<TransferMatrix>,
}

impl MatrixPolynomial {
    pub fn from_entries(entries: &[Vec<Poly>]) -> Result<Self> {
        let m = entries.len();
        if m == 0 || entries.iter().any(|r| r.len() != m) {
            return Err(Error::Assembly("matrix polynomial must be square and non-empty".into()));
        }
        let d = entries.iter().flatten().filter(|p| !p.is_zero()).map(Poly::degree).max();
        let d = d.ok_or_else(|| Error::MatrixStructure("matrix polynomial is identically zero".into()))?;
        let coeffs = (0..=d).map(|k| Mat::from_fn(m, m, |i, j| entries[i][j].coeff(k))).collect();
        Ok(MatrixPolynomial { coeffs, cleared: Poly::one(), cleared_roots: vec![], finite_count: None, source: None })
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn with_finite_count(mut self, n: usize) -> Self {
        self.finite_count = Some(n);
        self
    }

    pub fn eval(&self, s: Complex64) -> Mat<Complex64> {
        let m = self.dim();
        let mut out = Mat::<Complex64>::zeros(m, m);
        for a in self.coeffs.iter().rev() {
            out = Mat::from_fn(m, m, |i, j| out[(i, j)] * s + a[(i, j)]);
        }
        out
    }
}
