//! Dense complex matrices.
//!
//! Everything the solver update paths need lives here: products, adjoints,
//! traces, norms and linear combinations. There is intentionally no inverse,
//! factorization or eigensolver in this module; those are confined to
//! [`crate::oracle`] and are only reachable from diagnostics and evaluation.
//!
//! Products use a fixed summation order (inner index ascending), so repeated
//! runs on the same inputs are bit-identical.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `Complex64` entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::rect_identity(n, n)
    }

    /// `rows x cols` matrix with ones on the main diagonal.
    pub fn rect_identity(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Real diagonal matrix.
    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(x, 0.0);
        }
        m
    }

    /// Convenience constructor from nested rows of `(re, im)` pairs.
    pub fn from_rows(rows: &[&[(f64, f64)]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (r, c),
                    right: (1, row.len()),
                });
            }
            data.extend(row.iter().map(|&(re, im)| Complex64::new(re, im)));
        }
        Self::new(r, c, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Checked product `self * rhs`.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "matrix_product",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(self.matmul_unchecked(rhs))
    }

    fn matmul_unchecked(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let (n, inner, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![Complex64::new(0.0, 0.0); n * m];
        for i in 0..n {
            let lrow = &self.data[i * inner..(i + 1) * inner];
            let orow = &mut out[i * m..(i + 1) * m];
            for (p, &a) in lrow.iter().enumerate() {
                let rrow = &rhs.data[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// `selfᴴ * rhs` without materializing the adjoint.
    pub fn adjoint_mul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.rows, rhs.rows, "adjoint_mul: row counts differ");
        let (inner, n, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![Complex64::new(0.0, 0.0); n * m];
        for p in 0..inner {
            let lrow = self.row(p);
            let rrow = rhs.row(p);
            for (i, &a) in lrow.iter().enumerate() {
                let a = a.conj();
                let orow = &mut out[i * m..(i + 1) * m];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// `self * rhsᴴ`.
    pub fn mul_adjoint(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.cols, "mul_adjoint: column counts differ");
        ComplexMatrix::from_fn(self.rows, rhs.rows, |i, j| {
            self.row(i)
                .iter()
                .zip(rhs.row(j))
                .fold(Complex64::new(0.0, 0.0), |acc, (&a, &b)| acc + a * b.conj())
        })
    }

    pub fn trace(&self) -> Result<Complex64> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op: "trace",
                shape: self.shape(),
            });
        }
        Ok((0..self.rows).map(|i| self[(i, i)]).sum())
    }

    /// Real part of `Tr(selfᴴ rhs)`, i.e. the real inner product of the two
    /// matrices viewed as real vectors.
    pub fn real_inner(&self, rhs: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "real_inner: shapes differ");
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// `alpha * a + beta * b`.
    pub fn scaled_sum(
        alpha: Complex64,
        a: &ComplexMatrix,
        beta: Complex64,
        b: &ComplexMatrix,
    ) -> Result<ComplexMatrix> {
        if a.shape() != b.shape() {
            return Err(Error::DimensionMismatch {
                op: "scaled_sum",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| alpha * x + beta * y)
            .collect();
        Ok(ComplexMatrix {
            rows: a.rows,
            cols: a.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> ComplexMatrix {
        self.map(|z| z * s)
    }

    pub fn scale_complex(&self, s: Complex64) -> ComplexMatrix {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// `self += s * other`, in place.
    pub fn axpy(&mut self, s: f64, other: &ComplexMatrix) {
        assert_eq!(self.shape(), other.shape(), "axpy: shapes differ");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// Adds `s` to every diagonal entry.
    pub fn add_diag(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)].re += s;
        }
    }

    /// `(self + selfᴴ) / 2`.
    pub fn hermitian_part(&self) -> ComplexMatrix {
        assert!(self.is_square(), "hermitian_part: matrix not square");
        ComplexMatrix::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> ComplexMatrix {
        ComplexMatrix::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    /// Squared Euclidean norm of each row.
    pub fn row_norms_sqr(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// Real-symmetric embedding `[[Re, -Im], [Im, Re]]`, row-major `2n x 2m`.
    pub fn real_embedding(&self) -> Vec<Vec<f64>> {
        let (n, m) = self.shape();
        let mut out = vec![vec![0.0; 2 * m]; 2 * n];
        for i in 0..n {
            for j in 0..m {
                let z = self[(i, j)];
                out[i][j] = z.re;
                out[i][j + m] = -z.im;
                out[i + n][j] = z.im;
                out[i + n][j + m] = z.re;
            }
        }
        out
    }
}

/// Checked product; see [`ComplexMatrix::matmul`].
pub fn matrix_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(b)
}

pub fn hermitian_transpose(a: &ComplexMatrix) -> ComplexMatrix {
    a.adjoint()
}

pub fn trace(a: &ComplexMatrix) -> Result<Complex64> {
    a.trace()
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm()
}

pub fn scaled_sum(
    alpha: Complex64,
    a: &ComplexMatrix,
    beta: Complex64,
    b: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    ComplexMatrix::scaled_sum(alpha, a, beta, b)
}

/// Sum of squared Frobenius norms over a list of per-user blocks.
pub fn blocks_norm_sqr(blocks: &[ComplexMatrix]) -> f64 {
    blocks.iter().map(ComplexMatrix::frobenius_norm_sqr).sum()
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// The operator forms panic on shape mismatch. Solver code only multiplies
// blocks whose shapes were validated against the `SystemConfig` up front.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols,
            rhs.rows,
            "matrix product: {:?} x {:?}",
            self.shape(),
            rhs.shape()
        );
        self.matmul_unchecked(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let one = Complex64::new(1.0, 0.0);
        ComplexMatrix::scaled_sum(one, self, one, rhs).expect("matrix sum: shapes differ")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let one = Complex64::new(1.0, 0.0);
        ComplexMatrix::scaled_sum(one, self, -one, rhs).expect("matrix difference: shapes differ")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}
