//! Dense complex matrices and the Hermitian factorisations built on them.
//!
//! Storage is row-major. Products skip zero left-hand entries, which keeps
//! the Kronecker-structured operators (permutations, `F ⊗ I`) cheap without
//! a separate sparse type.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: fmt::Debug> fmt::Debug for CMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                let z = &self[(i, j)];
                write!(f, "{:>9.4?}{:+.4?}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("from_row_major", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| Complex::new(T::lit(rows[i][j]), T::zero()))
    }

    pub fn column(v: &[Complex<T>]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn diagonal(d: &[Complex<T>]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in d.iter().enumerate() {
            m.data[i * n + i] = z;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        Self::diagonal(&vec![Complex::new(s, T::zero()); n])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column_vec(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::dim(
                "matmul",
                format!("lhs cols == rhs rows ({})", self.cols),
                format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let n = rhs.cols;
        let mut out = Self::zeros(self.rows, n);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a.is_zero() {
                    continue;
                }
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^H * rhs` without materialising the adjoint.
    pub fn adjoint_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::dim(
                "adjoint_matmul",
                format!("row counts equal ({})", self.rows),
                rhs.rows,
            ));
        }
        let n = rhs.cols;
        let mut out = Self::zeros(self.cols, n);
        for p in 0..self.rows {
            let b_row = &rhs.data[p * n..(p + 1) * n];
            for i in 0..self.cols {
                let a = self.data[p * self.cols + i].conj();
                if a.is_zero() {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * self^H`, Hermitian by construction.
    pub fn gram(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in 0..=i {
                let rj = self.row(j);
                let mut acc = Complex::zero();
                for (&a, &b) in ri.iter().zip(rj) {
                    acc += a * b.conj();
                }
                out.data[i * n + j] = acc;
                out.data[j * n + i] = acc.conj();
            }
            out.data[i * n + i].im = T::zero();
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if v.len() != self.cols {
            return Err(Error::dim("mul_vec", self.cols, v.len()));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Complex::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn add_assign(&mut self, rhs: &Self) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::dim(
                "add_assign",
                format!("{:?}", self.shape()),
                format!("{:?}", rhs.shape()),
            ));
        }
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    fn zip_with(
        &self,
        rhs: &Self,
        context: &'static str,
        f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>,
    ) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::dim(
                context,
                format!("{:?}", self.shape()),
                format!("{:?}", rhs.shape()),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Self) -> Self {
        let (r2, c2) = rhs.shape();
        let rows = self.rows * r2;
        let cols = self.cols * c2;
        let mut out = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.data[i * self.cols + j];
                if a.is_zero() {
                    continue;
                }
                for p in 0..r2 {
                    let dst = (i * r2 + p) * cols + j * c2;
                    let src = p * c2;
                    for q in 0..c2 {
                        out.data[dst + q] = a * rhs.data[src + q];
                    }
                }
            }
        }
        out
    }

    /// Copies the `nrows x ncols` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nrows: usize, ncols: usize) -> Self {
        assert!(r0 + nrows <= self.rows && c0 + ncols <= self.cols, "block out of range");
        let mut out = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            let src = (r0 + i) * self.cols + c0;
            out.data[i * ncols..(i + 1) * ncols].copy_from_slice(&self.data[src..src + ncols]);
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(
            r0 + block.rows <= self.rows && c0 + block.cols <= self.cols,
            "block out of range"
        );
        for i in 0..block.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    /// Stacks row blocks on top of each other.
    pub fn vstack(blocks: &[&Self]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidInput("vstack of zero blocks".into()));
        };
        let cols = first.cols;
        let mut data = Vec::with_capacity(blocks.iter().map(|b| b.data.len()).sum());
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(Error::dim("vstack", cols, b.cols));
            }
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (0..=i).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol)
            })
    }

    /// Replaces the matrix by `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * half
        })
    }

    pub fn diag(&self) -> Vec<Complex<T>> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn cast<U: Real>(&self) -> CMatrix<U> {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| {
                    Complex::new(
                        U::from_f64(z.re.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan),
                        U::from_f64(z.im.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan),
                    )
                })
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor `L` of a Hermitian positive-definite matrix, `A = L L^H`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: CMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &CMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim("cholesky", "square", format!("{:?}", a.shape())));
        }
        let n = a.rows;
        let mut l = CMatrix::<T>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: min_eigenvalue_hermitian(a),
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex::new(djj, T::zero());
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &CMatrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves `L Y = B`.
    pub fn solve_lower(&self, b: &CMatrix<T>) -> Result<CMatrix<T>> {
        let n = self.dim();
        if b.rows != n {
            return Err(Error::dim("cholesky solve", n, b.rows));
        }
        let m = b.cols;
        let mut y = b.clone();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik.is_zero() {
                    continue;
                }
                for j in 0..m {
                    let v = y.data[k * m + j];
                    y.data[i * m + j] -= lik * v;
                }
            }
            let d = self.l[(i, i)].re;
            for j in 0..m {
                y.data[i * m + j] = y.data[i * m + j] / d;
            }
        }
        Ok(y)
    }

    /// Solves `L^H X = Y`.
    pub fn solve_upper(&self, y: &CMatrix<T>) -> Result<CMatrix<T>> {
        let n = self.dim();
        if y.rows != n {
            return Err(Error::dim("cholesky solve", n, y.rows));
        }
        let m = y.cols;
        let mut x = y.clone();
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = self.l[(k, i)].conj();
                if lki.is_zero() {
                    continue;
                }
                for j in 0..m {
                    let v = x.data[k * m + j];
                    x.data[i * m + j] -= lki * v;
                }
            }
            let d = self.l[(i, i)].re;
            for j in 0..m {
                x.data[i * m + j] = x.data[i * m + j] / d;
            }
        }
        Ok(x)
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.solve_upper(&self.solve_lower(b)?)
    }

    pub fn inverse(&self) -> Result<CMatrix<T>> {
        let inv = self.solve(&CMatrix::identity(self.dim()))?;
        Ok(inv.hermitian_part())
    }

    /// Natural log of `det(A)`.
    pub fn ln_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].re.ln()).sum()
    }
}

/// Smallest eigenvalue of a Hermitian matrix (dense eigendecomposition).
///
/// Only used for diagnostics on failure paths.
pub fn min_eigenvalue_hermitian<T: Real>(a: &CMatrix<T>) -> f64 {
    hermitian_eigenvalues(a)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Eigenvalues of the Hermitian part of `a`, in `f64`.
pub fn hermitian_eigenvalues<T: Real>(a: &CMatrix<T>) -> Vec<f64> {
    let n = a.rows;
    let m = nalgebra::DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let z = (a[(i, j)] + a[(j, i)].conj()) * T::lit(0.5);
        Complex::new(
            z.re.to_f64().unwrap_or(f64::NAN),
            z.im.to_f64().unwrap_or(f64::NAN),
        )
    });
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return vec![f64::NAN; n];
    }
    nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}
