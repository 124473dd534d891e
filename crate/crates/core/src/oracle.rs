//! Diagnostic-only numerical oracles.
//!
//! Explicit inverses, Hermitian eigenvalues and log-determinants. Used by the
//! inverse-based reference solver, by rate evaluation and by the property
//! checks. The inverse-free solvers never call into this module on their
//! update path; every public entry point bumps a per-thread call counter so
//! tests can prove it.

use std::cell::Cell;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Default relative tolerance for the Jacobi sweeps.
pub const DEFAULT_EIG_TOL: f64 = 1e-13;
/// Sweep budget for cyclic Jacobi.
pub const MAX_SWEEPS: usize = 50;
const HERMITIAN_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-14;
const PD_TOL: f64 = 1e-14;

thread_local! {
    static CALLS: Cell<u64> = const { Cell::new(0) };
}

fn bump() {
    CALLS.with(|c| c.set(c.get() + 1));
}

/// Oracle calls made on the current thread since the last reset.
pub fn call_count() -> u64 {
    CALLS.with(Cell::get)
}

pub fn reset_call_count() {
    CALLS.with(|c| c.set(0));
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Largest off-diagonal magnitude at termination, relative to
    /// `max(1, ‖A‖_F)`.
    pub residual: f64,
}

impl EigenResult {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }
}

fn hermitian_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

fn max_entry(a: &ComplexMatrix) -> f64 {
    a.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of a Hermitian matrix.
///
/// Runs cyclic Jacobi rotations on the real-symmetric embedding
/// `[[Re, -Im], [Im, Re]]`. Every eigenvalue of `a` appears twice in the
/// embedding; sorted neighbours are paired and averaged back to `n` values.
pub fn hermitian_eigenvalues(a: &ComplexMatrix, tol: f64) -> Result<EigenResult> {
    bump();
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "hermitian_eigenvalues",
            shape: a.shape(),
        });
    }
    let dev = hermitian_deviation(a);
    if dev > HERMITIAN_TOL * max_entry(a).max(1.0) {
        return Err(Error::NotHermitian {
            op: "hermitian_eigenvalues",
            deviation: dev,
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(EigenResult {
            eigenvalues: vec![],
            residual: 0.0,
        });
    }
    let mut m = a.hermitian_part().real_embedding();
    let scale = a.frobenius_norm().max(1.0);
    let (vals, residual) = jacobi_symmetric(&mut m, tol * scale)?;
    let mut vals = vals;
    vals.sort_by(f64::total_cmp);
    let eigenvalues = vals.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    Ok(EigenResult {
        eigenvalues,
        residual: residual / scale,
    })
}

/// Cyclic Jacobi on a dense real symmetric matrix. Returns the diagonal at
/// convergence and the final max off-diagonal magnitude.
fn jacobi_symmetric(a: &mut [Vec<f64>], threshold: f64) -> Result<(Vec<f64>, f64)> {
    let n = a.len();
    let off_max = |a: &[Vec<f64>]| {
        let mut m: f64 = 0.0;
        for (p, row) in a.iter().enumerate() {
            for &x in &row[p + 1..] {
                m = m.max(x.abs());
            }
        }
        m
    };
    let mut off = off_max(a);
    let mut sweeps = 0;
    while off > threshold {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { residual: off });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
            }
        }
        sweeps += 1;
        off = off_max(a);
    }
    Ok(((0..n).map(|i| a[i][i]).collect(), off))
}

/// Gauss-Jordan elimination with partial pivoting.
pub fn explicit_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    bump();
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "explicit_inverse",
            shape: a.shape(),
        });
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = ComplexMatrix::identity(n);
    for col in 0..n {
        let (piv_row, piv_mag) = (col..n)
            .map(|r| (r, m[(r, col)].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_mag < PIVOT_TOL {
            return Err(Error::Singular { pivot: piv_mag });
        }
        if piv_row != col {
            for j in 0..n {
                let t = m[(col, j)];
                m[(col, j)] = m[(piv_row, j)];
                m[(piv_row, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(piv_row, j)];
                inv[(piv_row, j)] = t;
            }
        }
        let p = Complex64::new(1.0, 0.0) / m[(col, col)];
        for j in 0..n {
            m[(col, j)] *= p;
            inv[(col, j)] *= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = m[(r, col)];
            if factor.norm() == 0.0 {
                continue;
            }
            for j in 0..n {
                let mv = m[(col, j)];
                let iv = inv[(col, j)];
                m[(r, j)] -= factor * mv;
                inv[(r, j)] -= factor * iv;
            }
        }
    }
    let residual = (&(a * &inv) - &ComplexMatrix::identity(n)).frobenius_norm();
    if residual > 1e-8 * n as f64 {
        return Err(Error::IllConditioned { residual });
    }
    Ok(inv)
}

/// Natural-log determinant of a Hermitian positive definite matrix, via the
/// Jacobi eigenvalues.
pub fn log_det_hpd(a: &ComplexMatrix) -> Result<f64> {
    bump();
    let eig = hermitian_eigenvalues(a, DEFAULT_EIG_TOL)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l <= PD_TOL) {
        return Err(Error::NotPositiveDefinite { eigenvalue: bad });
    }
    Ok(eig.eigenvalues.iter().map(|l| l.ln()).sum())
}

/// Largest singular value, `sqrt(λ_max(aᴴa))`.
pub fn max_singular_value(a: &ComplexMatrix, tol: f64) -> Result<f64> {
    bump();
    let gram = a.adjoint_mul(a).hermitian_part();
    let eig = hermitian_eigenvalues(&gram, tol)?;
    Ok(eig.max().max(0.0).sqrt())
}

/// Lower-triangular `L` with `a = L Lᴴ` for Hermitian PSD `a`.
///
/// Pivots that fall to roundoff level are zeroed together with their column,
/// so rank-deficient PSD inputs still factor.
pub fn cholesky_lower(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    bump();
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "cholesky_lower",
            shape: a.shape(),
        });
    }
    let n = a.rows();
    let floor = 1e-13 * max_entry(a).max(f64::MIN_POSITIVE);
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d < -floor * 1e3 {
            return Err(Error::NotPositiveDefinite { eigenvalue: d });
        }
        if d <= floor {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Eigenvalues of the product `E W` of two Hermitian PSD matrices.
///
/// With `E = L Lᴴ`, `E W` and `Lᴴ W L` share their spectrum, and the latter
/// is Hermitian PSD, so the values are real and non-negative.
pub fn product_eigenvalues(e: &ComplexMatrix, w: &ComplexMatrix) -> Result<EigenResult> {
    bump();
    if e.shape() != w.shape() {
        return Err(Error::DimensionMismatch {
            op: "product_eigenvalues",
            left: e.shape(),
            right: w.shape(),
        });
    }
    let l = cholesky_lower(&e.hermitian_part())?;
    let sandwich = (&l.adjoint_mul(&w.hermitian_part()) * &l).hermitian_part();
    hermitian_eigenvalues(&sandwich, DEFAULT_EIG_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_hpd, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn eigen_trivial() {
        let r = hermitian_eigenvalues(&ComplexMatrix::identity(2), DEFAULT_EIG_TOL).unwrap();
        assert!(close(&r.eigenvalues, &[1.0, 1.0], 1e-15));
        let r = hermitian_eigenvalues(&ComplexMatrix::from_diag(&[7.0, 3.0]), DEFAULT_EIG_TOL).unwrap();
        assert!(close(&r.eigenvalues, &[3.0, 7.0], 1e-15));
    }

    #[test]
    fn eigen_of_complex_2x2() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let a = ComplexMatrix::from_rows(&[&[(2.0, 0.0), (0.0, 1.0)], &[(0.0, -1.0), (2.0, 0.0)]]).unwrap();
        let r = hermitian_eigenvalues(&a, DEFAULT_EIG_TOL).unwrap();
        assert!(close(&r.eigenvalues, &[1.0, 3.0], 1e-13));
        assert!(r.residual <= DEFAULT_EIG_TOL);
    }

    #[test]
    fn gram_eigenvalues_sum_to_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 5, 4);
            let r = hermitian_eigenvalues(&a.adjoint_mul(&a).hermitian_part(), DEFAULT_EIG_TOL).unwrap();
            let sum: f64 = r.eigenvalues.iter().sum();
            assert!((sum - a.frobenius_norm_sqr()).abs() < 1e-11 * sum);
            assert!(r.min() > -1e-12);
            assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let a = ComplexMatrix::from_rows(&[&[(1.0, 0.0), (2.0, 0.0)], &[(0.0, 0.0), (1.0, 0.0)]]).unwrap();
        assert!(matches!(
            hermitian_eigenvalues(&a, DEFAULT_EIG_TOL),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(explicit_inverse(&ComplexMatrix::identity(3)).unwrap(), ComplexMatrix::identity(3));
        let inv = explicit_inverse(&ComplexMatrix::from_diag(&[2.0, 4.0])).unwrap();
        assert!(inv.max_abs_diff(&ComplexMatrix::from_diag(&[0.5, 0.25])) < 1e-16);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_hpd(&mut rng, 4, 1.0);
        let inv = explicit_inverse(&a).unwrap();
        assert!((&a * &inv).max_abs_diff(&ComplexMatrix::identity(4)) < 1e-10);
        assert!(matches!(
            explicit_inverse(&ComplexMatrix::zeros(2, 2)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn double_inverse_is_identity_for_moderate_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for k in 0..6 {
            // condition number about 10^k
            let mut a = random_matrix(&mut rng, 4, 4);
            a[(0, 0)] *= 10f64.powi(k);
            a.add_diag(0.5);
            if let Ok(inv) = explicit_inverse(&a) {
                let back = explicit_inverse(&inv).unwrap();
                assert!(back.max_abs_diff(&a) <= 1e-8 * a.frobenius_norm());
            }
        }
    }

    #[test]
    fn log_det_cases() {
        assert_eq!(log_det_hpd(&ComplexMatrix::identity(3)).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((log_det_hpd(&ComplexMatrix::from_diag(&[e, e])).unwrap() - 2.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random_matrix(&mut rng, 3, 3);
        let mut g = a.adjoint_mul(&a).hermitian_part();
        g.add_diag(1.0);
        let eig = hermitian_eigenvalues(&g, DEFAULT_EIG_TOL).unwrap();
        let prod: f64 = eig.eigenvalues.iter().product();
        assert!((log_det_hpd(&g).unwrap() - prod.ln()).abs() < 1e-9);
        assert!(matches!(
            log_det_hpd(&ComplexMatrix::from_diag(&[1.0, 0.0])),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn singular_value_cases() {
        assert!((max_singular_value(&ComplexMatrix::identity(2), DEFAULT_EIG_TOL).unwrap() - 1.0).abs() < 1e-15);
        let d = ComplexMatrix::from_diag(&[0.0, 5.0]);
        assert!((max_singular_value(&d, DEFAULT_EIG_TOL).unwrap() - 5.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 3, 5);
            assert!(max_singular_value(&a, DEFAULT_EIG_TOL).unwrap() <= a.frobenius_norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn product_spectrum_matches_sandwich_route() {
        // W = B Bᴴ, so eig(E W) = eig(Bᴴ E B), computed without a factorization of E.
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for n in 1..=4 {
            let e = random_hpd(&mut rng, n, 0.1);
            let b = random_matrix(&mut rng, n, n);
            let w = b.mul_adjoint(&b).hermitian_part();
            let direct = product_eigenvalues(&e, &w).unwrap();
            let via_b = hermitian_eigenvalues(&(&b.adjoint_mul(&e) * &b).hermitian_part(), DEFAULT_EIG_TOL).unwrap();
            let scale = direct.max().max(1.0);
            assert!(close(&direct.eigenvalues, &via_b.eigenvalues, 1e-8 * scale));
            assert!(direct.min() >= -1e-10 * scale);
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_hpd(&mut rng, 4, 0.5);
        let l = cholesky_lower(&a).unwrap();
        assert!(l.mul_adjoint(&l).max_abs_diff(&a) < 1e-12);
        // rank one PSD
        let v = random_matrix(&mut rng, 3, 1);
        let p = v.mul_adjoint(&v);
        let l = cholesky_lower(&p).unwrap();
        assert!(l.mul_adjoint(&l).max_abs_diff(&p) < 1e-10);
    }

    #[test]
    fn counter_tracks_calls() {
        reset_call_count();
        let _ = log_det_hpd(&ComplexMatrix::identity(2));
        assert!(call_count() >= 1);
        reset_call_count();
        assert_eq!(call_count(), 0);
    }
}
