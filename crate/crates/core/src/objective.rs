//! Cost function, MSE matrices, rates, block gradients and the step
//! perturbation matrices.
//!
//! The gradients are real-embedding gradients: for a direction `D` the
//! directional derivative of `f` is `Re Tr(Gᴴ D)`. Descent steps subtract
//! them as they are.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{blocks_norm_sqr, ComplexMatrix};
use crate::oracle;
use crate::system::{BeamformerState, ChannelSet, SystemConfig};

/// Per-user `(Tr(W_k E_k), ln det W_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserCost {
    pub trace_term: f64,
    pub logdet_term: f64,
}

/// `f = Σ_k α_k (Tr(W_k E_k) - ln det W_k)` in nats, with its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub per_user: Vec<UserCost>,
}

/// Per-user rates and their weighted sum, in bits per channel use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rates: Vec<f64>,
    pub wsr: f64,
}

/// Matrices describing how `E_k` moves under one gradient step.
///
/// A V-step `V ← V - γ G_v` gives `E⁺ - E = γ(γA + B)`; a U-step
/// `U ← U - γ G_u` gives `E⁺ - E = γ(γC + D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDiagnostics {
    pub a: Vec<ComplexMatrix>,
    pub b: Vec<ComplexMatrix>,
    pub c: Vec<ComplexMatrix>,
    pub d: Vec<ComplexMatrix>,
    pub psi: Vec<ComplexMatrix>,
    pub omega: Vec<ComplexMatrix>,
    pub upsilon: Vec<ComplexMatrix>,
}

fn check(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> Result<()> {
    channels.check_shapes(config)?;
    state.check_shapes(config)
}

fn check_user(config: &SystemConfig, k: usize) -> Result<()> {
    if k >= config.users {
        return Err(Error::InvalidInput(format!("user index {k} out of range for K = {}", config.users)));
    }
    Ok(())
}

/// `σ² Σ_m Tr(V_m V_mᴴ) / P`, the power-normalized noise level.
pub fn scaled_noise(config: &SystemConfig, v: &[ComplexMatrix]) -> f64 {
    config.noise_var * blocks_norm_sqr(v) / config.power
}

/// `Υ_k = Σ_m H_k V_m V_mᴴ H_kᴴ`.
pub fn upsilon(channels: &ChannelSet, v: &[ComplexMatrix], k: usize) -> ComplexMatrix {
    let hk = &channels.h[k];
    let n = hk.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    for vm in v {
        let hv = hk * vm;
        out = &out + &hv.mul_adjoint(&hv);
    }
    out
}

/// `Q_k = s I + Υ_k` with `s` the scaled noise level.
pub fn q_matrix(config: &SystemConfig, channels: &ChannelSet, v: &[ComplexMatrix], k: usize) -> ComplexMatrix {
    let mut q = upsilon(channels, v, k);
    q.add_diag(scaled_noise(config, v));
    q
}

/// `R = Σ_m α_m [(σ²/P) Tr(W_m U_mᴴ U_m) I + H_mᴴ U_m W_m U_mᴴ H_m]`.
pub fn r_matrix(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> ComplexMatrix {
    let m = config.tx_antennas;
    let mut r = ComplexMatrix::zeros(m, m);
    let mut diag = 0.0;
    for (k, hk) in channels.h.iter().enumerate() {
        let alpha = config.priority(k);
        let (uk, wk) = (&state.u[k], &state.w[k]);
        let uwu = &(uk * wk) * &uk.adjoint();
        diag += alpha * (wk * &uk.adjoint_mul(uk)).trace().map(|t| t.re).unwrap_or(0.0);
        r.axpy(alpha, &(&hk.adjoint_mul(&uwu) * hk));
    }
    r.add_diag(diag * config.noise_var / config.power);
    r.hermitian_part()
}

/// `I - T_k - T_kᴴ + Σ_m T_m T_mᴴ + noise · U_kᴴ U_k` with `T_m = U_kᴴ H_k V_m`.
fn mse_with_noise(channels: &ChannelSet, state: &BeamformerState, k: usize, noise: f64) -> ComplexMatrix {
    let uk = &state.u[k];
    let uh = uk.adjoint_mul(&channels.h[k]);
    let d = uk.cols();
    let mut e = ComplexMatrix::identity(d);
    for (m, vm) in state.v.iter().enumerate() {
        let t = &uh * vm;
        e = &e + &t.mul_adjoint(&t);
        if m == k {
            e = &e - &(&t + &t.adjoint());
        }
    }
    e.axpy(noise, &uk.adjoint_mul(uk));
    e.hermitian_part()
}

/// `E_k` with the noise term scaled by `Σ_m Tr(V_m V_mᴴ) / P`.
pub fn mse_matrix_scaled(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
    k: usize,
) -> Result<ComplexMatrix> {
    check(config, channels, state)?;
    check_user(config, k)?;
    Ok(mse_with_noise(channels, state, k, scaled_noise(config, &state.v)))
}

/// `E_k` for every user.
pub fn mse_matrices_scaled(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
) -> Result<Vec<ComplexMatrix>> {
    check(config, channels, state)?;
    let noise = scaled_noise(config, &state.v);
    Ok((0..config.users).map(|k| mse_with_noise(channels, state, k, noise)).collect())
}

/// `Ẽ_k`, the MSE matrix with plain `σ²` noise.
pub fn mse_matrix_plain(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
    k: usize,
) -> Result<ComplexMatrix> {
    check(config, channels, state)?;
    check_user(config, k)?;
    Ok(mse_with_noise(channels, state, k, config.noise_var))
}

/// `Σ_k α_k Tr(W_k E_k)`: the part of `f` that needs no log-determinant.
pub fn trace_cost(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> Result<f64> {
    let e = mse_matrices_scaled(config, channels, state)?;
    Ok(trace_cost_from(config, state, &e))
}

pub(crate) fn trace_cost_from(config: &SystemConfig, state: &BeamformerState, e: &[ComplexMatrix]) -> f64 {
    e.iter()
        .zip(&state.w)
        .enumerate()
        .map(|(k, (ek, wk))| config.priority(k) * wk.adjoint().real_inner(ek))
        .sum()
}

/// Full cost `f`. The log-determinant goes through the oracle.
pub fn cost_f(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> Result<CostBreakdown> {
    let e = mse_matrices_scaled(config, channels, state)?;
    let mut per_user = Vec::with_capacity(config.users);
    let mut total = 0.0;
    for (k, (ek, wk)) in e.iter().zip(&state.w).enumerate() {
        // Re Tr(W E) = <Wᴴ, E>
        let trace_term = wk.adjoint().real_inner(ek);
        let logdet_term = oracle::log_det_hpd(wk)?;
        total += config.priority(k) * (trace_term - logdet_term);
        per_user.push(UserCost { trace_term, logdet_term });
    }
    Ok(CostBreakdown { total, per_user })
}

/// Rates `log₂ det(I + S_k N_k⁻¹)` and the weighted sum rate.
///
/// Computed as `(ln det(N_k + S_k) - ln det N_k) / ln 2` with oracle
/// log-determinants; evaluation only.
pub fn rate_and_wsr(config: &SystemConfig, channels: &ChannelSet, v: &[ComplexMatrix]) -> Result<RateReport> {
    channels.check_shapes(config)?;
    if v.len() != config.users {
        return Err(Error::InvalidInput(format!("{} beamformers for K = {}", v.len(), config.users)));
    }
    let mut rates = Vec::with_capacity(config.users);
    let mut wsr = 0.0;
    for (k, hk) in channels.h.iter().enumerate() {
        let n = hk.rows();
        let mut interference = ComplexMatrix::identity(n).scale(config.noise_var);
        let mut signal = ComplexMatrix::zeros(n, n);
        for (m, vm) in v.iter().enumerate() {
            let hv = hk.matmul(vm)?;
            let cov = hv.mul_adjoint(&hv);
            if m == k {
                signal = cov;
            } else {
                interference = &interference + &cov;
            }
        }
        let interference = interference.hermitian_part();
        let total = (&interference + &signal).hermitian_part();
        let rate = (oracle::log_det_hpd(&total)? - oracle::log_det_hpd(&interference)?) / std::f64::consts::LN_2;
        wsr += config.priority(k) * rate;
        rates.push(rate);
    }
    Ok(RateReport { rates, wsr })
}

fn grad_u_unchecked(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState, k: usize, noise: f64) -> ComplexMatrix {
    let (hk, uk) = (&channels.h[k], &state.u[k]);
    // (Υ_k + s I) U_k - H_k V_k
    let mut inner = uk.scale(noise);
    for (m, vm) in state.v.iter().enumerate() {
        let hv = hk * vm;
        inner = &inner + &(&hv * &hv.adjoint_mul(uk));
        if m == k {
            inner = &inner - &hv;
        }
    }
    (&inner * &state.w[k]).scale(2.0 * config.priority(k))
}

/// Gradient of `f` with respect to `U_k` (`N x d`).
pub fn grad_u(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState, k: usize) -> Result<ComplexMatrix> {
    check(config, channels, state)?;
    check_user(config, k)?;
    Ok(grad_u_unchecked(config, channels, state, k, scaled_noise(config, &state.v)))
}

/// Gradients with respect to every `U_k`.
pub fn grad_u_all(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> Result<Vec<ComplexMatrix>> {
    check(config, channels, state)?;
    let noise = scaled_noise(config, &state.v);
    Ok((0..config.users).map(|k| grad_u_unchecked(config, channels, state, k, noise)).collect())
}

fn grad_v_with_r(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState, r: &ComplexMatrix, k: usize) -> ComplexMatrix {
    let uw = &state.u[k] * &state.w[k];
    let pull = channels.h[k].adjoint_mul(&uw).scale(config.priority(k));
    (&(r * &state.v[k]) - &pull).scale(2.0)
}

/// Gradient of `f` with respect to `V_k` (`M x d`).
pub fn grad_v(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState, k: usize) -> Result<ComplexMatrix> {
    check(config, channels, state)?;
    check_user(config, k)?;
    let r = r_matrix(config, channels, state);
    Ok(grad_v_with_r(config, channels, state, &r, k))
}

/// Gradients with respect to every `V_k`, sharing one `R`.
pub fn grad_v_all(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> Result<Vec<ComplexMatrix>> {
    check(config, channels, state)?;
    let r = r_matrix(config, channels, state);
    Ok((0..config.users).map(|k| grad_v_with_r(config, channels, state, &r, k)).collect())
}

/// Evaluates `A, B, C, D, Ψ, Ω, Υ` for the given per-user gradients.
///
/// `C` and `D` carry the plain noise variance `σ²`, so the U-step identity is
/// exact when the beamformers sit on the power budget.
pub fn perturbation_diagnostics(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
    grad_u: &[ComplexMatrix],
    grad_v: &[ComplexMatrix],
) -> Result<PerturbationDiagnostics> {
    check(config, channels, state)?;
    let k_users = config.users;
    if grad_u.len() != k_users || grad_v.len() != k_users {
        return Err(Error::InvalidInput("one gradient per user is required".into()));
    }
    for (g, u) in grad_u.iter().zip(&state.u) {
        if g.shape() != u.shape() {
            return Err(Error::DimensionMismatch { op: "grad_u", left: g.shape(), right: u.shape() });
        }
    }
    for (g, v) in grad_v.iter().zip(&state.v) {
        if g.shape() != v.shape() {
            return Err(Error::DimensionMismatch { op: "grad_v", left: g.shape(), right: v.shape() });
        }
    }
    let ratio = config.noise_var / config.power;
    let gg_power = blocks_norm_sqr(grad_v);
    let cross_power: f64 = grad_v.iter().zip(&state.v).map(|(g, v)| 2.0 * g.real_inner(v)).sum();

    let mut out = PerturbationDiagnostics {
        a: Vec::with_capacity(k_users),
        b: Vec::with_capacity(k_users),
        c: Vec::with_capacity(k_users),
        d: Vec::with_capacity(k_users),
        psi: Vec::with_capacity(k_users),
        omega: Vec::with_capacity(k_users),
        upsilon: Vec::with_capacity(k_users),
    };
    for k in 0..k_users {
        let hk = &channels.h[k];
        let n = hk.rows();
        let (uk, vk, gu, gv) = (&state.u[k], &state.v[k], &grad_u[k], &grad_v[k]);

        let ups = upsilon(channels, &state.v, k);
        let mut psi = ComplexMatrix::zeros(n, n);
        let mut omega = ComplexMatrix::zeros(n, n);
        for (gm, vm) in grad_v.iter().zip(&state.v) {
            let hg = hk * gm;
            let hv = hk * vm;
            psi = &psi + &hg.mul_adjoint(&hg);
            let cross = hg.mul_adjoint(&hv);
            omega = &(&omega + &cross) + &cross.adjoint();
        }
        psi.add_diag(ratio * gg_power);
        omega.add_diag(ratio * cross_power);

        let a = &uk.adjoint_mul(&psi) * uk;
        let uhg = uk.adjoint_mul(&(hk * gv));
        let b = &(&uhg + &uhg.adjoint()) - &(&uk.adjoint_mul(&omega) * uk);

        let mut ups_noise = ups.clone();
        ups_noise.add_diag(config.noise_var);
        let c = &gu.adjoint_mul(&ups_noise) * gu;
        let vhg = (hk * vk).adjoint_mul(gu);
        let ug = &uk.adjoint_mul(&ups_noise) * gu;
        let d = &(&vhg + &vhg.adjoint()) - &(&ug + &ug.adjoint());

        out.a.push(a);
        out.b.push(b);
        out.c.push(c);
        out.d.push(d);
        out.psi.push(psi);
        out.omega.push(omega);
        out.upsilon.push(ups);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_channels, scale_to_power, KappaMode};
    use crate::sampling::{random_matrix, random_state, random_unitary};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(x: Complex64) -> ComplexMatrix {
        ComplexMatrix::new(1, 1, vec![x]).unwrap()
    }

    fn scenarios() -> Vec<SystemConfig> {
        let mut weighted = SystemConfig::at_10db(4, 3, 2, 1);
        weighted.priorities = vec![0.5, 1.0, 2.0];
        vec![SystemConfig::at_10db(4, 2, 2, 2), SystemConfig::at_10db(8, 4, 2, 2), weighted]
    }

    #[test]
    fn zero_receivers_give_identity() {
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let ch = generate_channels(&cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_state(&cfg, &mut rng, false);
        s.u = vec![ComplexMatrix::zeros(2, 2); 2];
        for k in 0..2 {
            assert_eq!(mse_matrix_scaled(&cfg, &ch, &s, k).unwrap(), ComplexMatrix::identity(2));
            assert_eq!(mse_matrix_plain(&cfg, &ch, &s, k).unwrap(), ComplexMatrix::identity(2));
        }
        s.w = vec![ComplexMatrix::identity(2); 2];
        assert!((cost_f(&cfg, &ch, &s).unwrap().total - 4.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_mse_matches_expansion() {
        let (p, s2) = (2.0, 0.7);
        let cfg = SystemConfig::new(1, 1, 1, 1, p, s2);
        let (h, u, v) = (c(0.8, -0.3), c(0.4, 0.9), c(-1.1, 0.2));
        let ch = ChannelSet::from_matrices(vec![scalar(h)], KappaMode::Frobenius).unwrap();
        let s = BeamformerState { u: vec![scalar(u)], w: vec![scalar(c(1.0, 0.0))], v: vec![scalar(v)] };
        let scaled = (c(1.0, 0.0) - u.conj() * h * v).norm_sqr() + v.norm_sqr() / p * s2 * u.norm_sqr();
        let plain = (c(1.0, 0.0) - u.conj() * h * v).norm_sqr() + s2 * u.norm_sqr();
        assert!((mse_matrix_scaled(&cfg, &ch, &s, 0).unwrap()[(0, 0)] - scaled).norm() < 1e-14);
        assert!((mse_matrix_plain(&cfg, &ch, &s, 0).unwrap()[(0, 0)] - plain).norm() < 1e-14);
    }

    #[test]
    fn plain_and_scaled_agree_at_full_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for cfg in scenarios() {
            let ch = generate_channels(&cfg, 2);
            let s = random_state(&cfg, &mut rng, true);
            for k in 0..cfg.users {
                let a = mse_matrix_scaled(&cfg, &ch, &s, k).unwrap();
                let b = mse_matrix_plain(&cfg, &ch, &s, k).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-12);
            }
        }
    }

    #[test]
    fn mse_floor_and_psd() {
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..100 {
            let ch = generate_channels(&cfg, seed);
            let mut s = random_state(&cfg, &mut rng, true);
            for uk in &mut s.u {
                *uk = uk.scale(3.0);
            }
            let floor = cfg.noise_var / (cfg.power * ch.kappa + cfg.noise_var);
            for k in 0..2 {
                let e = mse_matrix_scaled(&cfg, &ch, &s, k).unwrap();
                assert!(e.is_hermitian(1e-12));
                let eig = oracle::hermitian_eigenvalues(&e, oracle::DEFAULT_EIG_TOL).unwrap();
                assert!(eig.min() >= floor * (1.0 - 1e-9), "{} < {floor}", eig.min());
                let plain = mse_matrix_plain(&cfg, &ch, &s, k).unwrap();
                assert!(oracle::hermitian_eigenvalues(&plain, 1e-13).unwrap().min() >= -1e-10);
            }
        }
    }

    #[test]
    fn cost_at_optimal_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for cfg in scenarios() {
            let ch = generate_channels(&cfg, 4);
            let mut s = random_state(&cfg, &mut rng, false);
            let before = cost_f(&cfg, &ch, &s).unwrap();
            let e = mse_matrices_scaled(&cfg, &ch, &s).unwrap();
            s.w = e.iter().map(|ek| oracle::explicit_inverse(ek).unwrap().hermitian_part()).collect();
            let after = cost_f(&cfg, &ch, &s).unwrap();
            assert!(after.total <= before.total);
            for (k, ek) in e.iter().enumerate() {
                let expect = cfg.streams as f64 + oracle::log_det_hpd(ek).unwrap();
                let got = after.per_user[k].trace_term - after.per_user[k].logdet_term;
                assert!((got - expect).abs() < 1e-10);
            }
            let sum: f64 = after
                .per_user
                .iter()
                .enumerate()
                .map(|(k, p)| cfg.priority(k) * (p.trace_term - p.logdet_term))
                .sum();
            assert!((sum - after.total).abs() <= 1e-12 * after.total.abs().max(1.0));
        }
    }

    #[test]
    fn cost_rejects_singular_weights() {
        let cfg = SystemConfig::at_10db(2, 1, 2, 2);
        let ch = generate_channels(&cfg, 5);
        let s = BeamformerState {
            u: vec![ComplexMatrix::zeros(2, 2)],
            w: vec![ComplexMatrix::from_diag(&[1.0, 0.0])],
            v: vec![ComplexMatrix::identity(2)],
        };
        assert!(matches!(cost_f(&cfg, &ch, &s), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rate_examples() {
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let ch = generate_channels(&cfg, 6);
        let r = rate_and_wsr(&cfg, &ch, &[ComplexMatrix::zeros(4, 2), ComplexMatrix::zeros(4, 2)]).unwrap();
        assert_eq!(r.rates, vec![0.0, 0.0]);
        assert_eq!(r.wsr, 0.0);

        let scfg = SystemConfig::new(1, 1, 1, 1, 3.0, 0.4);
        let (h, v) = (c(0.3, 1.2), c(-0.7, 0.5));
        let sch = ChannelSet::from_matrices(vec![scalar(h)], KappaMode::Frobenius).unwrap();
        let r = rate_and_wsr(&scfg, &sch, &[scalar(v)]).unwrap();
        let expect = (1.0 + (h * v).norm_sqr() / 0.4).log2();
        assert!((r.wsr - expect).abs() < 1e-12);
    }

    #[test]
    fn rates_ignore_unitary_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SystemConfig::at_10db(8, 4, 2, 2);
        let ch = generate_channels(&cfg, 7);
        let s = random_state(&cfg, &mut rng, true);
        let base = rate_and_wsr(&cfg, &ch, &s.v).unwrap();
        let rotated: Vec<_> = s.v.iter().map(|vk| vk * &random_unitary(&mut rng, 2)).collect();
        let after = rate_and_wsr(&cfg, &ch, &rotated).unwrap();
        assert!((base.wsr - after.wsr).abs() < 1e-10);
    }

    fn perturb(s: &BeamformerState, which: char, k: usize, dir: &ComplexMatrix, h: f64) -> BeamformerState {
        let mut out = s.clone();
        let block = if which == 'u' { &mut out.u[k] } else { &mut out.v[k] };
        block.axpy(h, dir);
        out
    }

    fn check_fd(cfg: &SystemConfig, ch: &ChannelSet, s: &BeamformerState, rng: &mut ChaCha8Rng) {
        let gu = grad_u_all(cfg, ch, s).unwrap();
        let gv = grad_v_all(cfg, ch, s).unwrap();
        let step = 1e-6;
        for k in 0..cfg.users {
            for (which, g) in [('u', &gu[k]), ('v', &gv[k])] {
                let dir = random_matrix(rng, g.rows(), g.cols());
                let fp = trace_cost(cfg, ch, &perturb(s, which, k, &dir, step)).unwrap();
                let fm = trace_cost(cfg, ch, &perturb(s, which, k, &dir, -step)).unwrap();
                let fd = (fp - fm) / (2.0 * step);
                let an = g.real_inner(&dir);
                let scale = an.abs().max(g.frobenius_norm() * dir.frobenius_norm()).max(1e-3);
                assert!((fd - an).abs() <= 1e-6 * scale, "{which}{k}: fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for cfg in scenarios() {
            for seed in 0..50 {
                let ch = generate_channels(&cfg, seed);
                let s = random_state(&cfg, &mut rng, seed % 2 == 0);
                check_fd(&cfg, &ch, &s, &mut rng);
            }
        }
    }

    #[test]
    fn gradients_vanish_trivially() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let ch = generate_channels(&cfg, 9);
        let mut s = random_state(&cfg, &mut rng, false);
        let w = s.w.clone();
        s.w[1] = ComplexMatrix::zeros(2, 2);
        assert!(grad_u(&cfg, &ch, &s, 1).unwrap().is_zero());
        s.w = w;
        s.u = vec![ComplexMatrix::zeros(2, 2); 2];
        for k in 0..2 {
            assert!(grad_v(&cfg, &ch, &s, k).unwrap().is_zero());
        }
    }

    #[test]
    fn gradients_vanish_at_block_optima() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for cfg in scenarios() {
            let ch = generate_channels(&cfg, 10);
            let mut s = random_state(&cfg, &mut rng, false);
            for k in 0..cfg.users {
                let q = q_matrix(&cfg, &ch, &s.v, k);
                s.u[k] = &oracle::explicit_inverse(&q).unwrap() * &(&ch.h[k] * &s.v[k]);
            }
            for k in 0..cfg.users {
                assert!(grad_u(&cfg, &ch, &s, k).unwrap().frobenius_norm() <= 1e-8);
            }
            let r_inv = oracle::explicit_inverse(&r_matrix(&cfg, &ch, &s)).unwrap();
            for k in 0..cfg.users {
                let pull = ch.h[k].adjoint_mul(&(&s.u[k] * &s.w[k]));
                s.v[k] = (&r_inv * &pull).scale(cfg.priority(k));
            }
            for k in 0..cfg.users {
                assert!(grad_v(&cfg, &ch, &s, k).unwrap().frobenius_norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn perturbation_identities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for cfg in scenarios() {
            for seed in 0..10 {
                let ch = generate_channels(&cfg, seed);
                let s = random_state(&cfg, &mut rng, true);
                let gu = grad_u_all(&cfg, &ch, &s).unwrap();
                let gv = grad_v_all(&cfg, &ch, &s).unwrap();
                let diag = perturbation_diagnostics(&cfg, &ch, &s, &gu, &gv).unwrap();
                let e0 = mse_matrices_scaled(&cfg, &ch, &s).unwrap();
                let gamma = 0.01;

                let mut sv = s.clone();
                for (vk, g) in sv.v.iter_mut().zip(&gv) {
                    vk.axpy(-gamma, g);
                }
                let ev = mse_matrices_scaled(&cfg, &ch, &sv).unwrap();
                let mut su = s.clone();
                for (uk, g) in su.u.iter_mut().zip(&gu) {
                    uk.axpy(-gamma, g);
                }
                let eu = mse_matrices_scaled(&cfg, &ch, &su).unwrap();
                for k in 0..cfg.users {
                    let pred_v = &diag.a[k].scale(gamma * gamma) + &diag.b[k].scale(gamma);
                    assert!((&ev[k] - &e0[k]).max_abs_diff(&pred_v) < 1e-10);
                    let pred_u = &diag.c[k].scale(gamma * gamma) + &diag.d[k].scale(gamma);
                    assert!((&eu[k] - &e0[k]).max_abs_diff(&pred_u) < 1e-10);
                    for m in [&diag.a[k], &diag.c[k]] {
                        assert!(m.is_hermitian(1e-9));
                        assert!(oracle::hermitian_eigenvalues(m, 1e-13).unwrap().min() >= -1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_v_gradient_gives_zero_v_diagnostics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let ch = generate_channels(&cfg, 12);
        let s = random_state(&cfg, &mut rng, true);
        let gu = grad_u_all(&cfg, &ch, &s).unwrap();
        let gv = vec![ComplexMatrix::zeros(4, 2); 2];
        let diag = perturbation_diagnostics(&cfg, &ch, &s, &gu, &gv).unwrap();
        for k in 0..2 {
            assert!(diag.a[k].is_zero() && diag.b[k].is_zero());
            assert!(diag.psi[k].is_zero() && diag.omega[k].is_zero());
        }
    }

    #[test]
    fn reciprocal_scaling_leaves_mse_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for cfg in scenarios() {
            let ch = generate_channels(&cfg, 13);
            let s = random_state(&cfg, &mut rng, false);
            let mut t = s.clone();
            let beta = scale_to_power(&mut t.v, cfg.power).unwrap();
            for uk in &mut t.u {
                *uk = uk.scale(1.0 / beta);
            }
            let a = mse_matrices_scaled(&cfg, &ch, &s).unwrap();
            let b = mse_matrices_scaled(&cfg, &ch, &t).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!(x.max_abs_diff(y) < 1e-12);
            }
        }
    }

    #[test]
    fn log_det_weight_matches_rate_at_block_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for cfg in scenarios() {
            let ch = generate_channels(&cfg, 14);
            let mut s = random_state(&cfg, &mut rng, true);
            for k in 0..cfg.users {
                let q = q_matrix(&cfg, &ch, &s.v, k);
                s.u[k] = &oracle::explicit_inverse(&q).unwrap() * &(&ch.h[k] * &s.v[k]);
            }
            let rates = rate_and_wsr(&cfg, &ch, &s.v).unwrap();
            for k in 0..cfg.users {
                let e = mse_matrix_plain(&cfg, &ch, &s, k).unwrap();
                let w = oracle::explicit_inverse(&e).unwrap().hermitian_part();
                let ld = oracle::log_det_hpd(&w).unwrap();
                assert!((ld - std::f64::consts::LN_2 * rates.rates[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let ch = generate_channels(&cfg, 15);
        let mut s = BeamformerState::zeros(&cfg);
        s.v[0] = ComplexMatrix::zeros(3, 2);
        assert!(matches!(mse_matrix_scaled(&cfg, &ch, &s, 0), Err(Error::DimensionMismatch { .. })));
        assert!(grad_u(&cfg, &ch, &BeamformerState::zeros(&cfg), 5).is_err());
    }
}
