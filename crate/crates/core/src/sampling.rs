//! Random complex instances for property checks.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::ComplexMatrix;
use crate::oracle;
use crate::system::{scale_to_power, BeamformerState, SystemConfig};

/// Matrix with i.i.d. `CN(0, 1)` entries.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// `A Aᴴ + shift I`, Hermitian positive definite for `shift > 0`.
pub fn random_hpd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> ComplexMatrix {
    let a = random_matrix(rng, n, n);
    let mut h = a.mul_adjoint(&a).hermitian_part();
    h.add_diag(shift);
    h
}

/// Haar-like unitary from Gram-Schmidt on a Gaussian matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> ComplexMatrix {
    let a = random_matrix(rng, n, n);
    let mut q = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut col: Vec<Complex64> = (0..n).map(|i| a[(i, j)]).collect();
        for p in 0..j {
            let proj: Complex64 = (0..n).map(|i| q[(i, p)].conj() * col[i]).sum();
            for (i, x) in col.iter_mut().enumerate() {
                *x -= proj * q[(i, p)];
            }
        }
        let norm = col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for (i, x) in col.iter().enumerate() {
            q[(i, j)] = x / norm;
        }
    }
    q
}

/// Hermitian PD `E` and PSD `W` such that `E W` has exactly the eigenvalues
/// in `spectrum`: `E = L Lᴴ`, `W = L⁻ᴴ Q diag(spectrum) Qᴴ L⁻¹`.
pub fn pair_with_product_spectrum<R: Rng>(rng: &mut R, spectrum: &[f64]) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = spectrum.len();
    let e = random_hpd(rng, n, 0.3);
    let l = oracle::cholesky_lower(&e)?;
    let l_inv = oracle::explicit_inverse(&l)?;
    let q = random_unitary(rng, n);
    let core = &(&q * &ComplexMatrix::from_diag(spectrum)) * &q.adjoint();
    let w = (&(&l_inv.adjoint() * &core) * &l_inv).hermitian_part();
    Ok((e, w))
}

/// Random `U` (scaled by 0.3), HPD `W` and Gaussian `V`, the latter scaled
/// onto the power budget when `at_power` is set.
pub fn random_state<R: Rng>(config: &SystemConfig, rng: &mut R, at_power: bool) -> BeamformerState {
    let (m, k, n, d) = (config.tx_antennas, config.users, config.rx_antennas, config.streams);
    let mut v: Vec<_> = (0..k).map(|_| random_matrix(rng, m, d)).collect();
    if at_power {
        scale_to_power(&mut v, config.power).expect("Gaussian beamformers are nonzero");
    }
    BeamformerState {
        u: (0..k).map(|_| random_matrix(rng, n, d).scale(0.3)).collect(),
        w: (0..k).map(|_| random_hpd(rng, d, 0.5)).collect(),
        v,
    }
}
