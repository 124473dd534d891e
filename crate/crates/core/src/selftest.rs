//! Quick property suite behind `beamsolve selftest`.
//!
//! Each check draws a small batch of seeded random instances and verifies one
//! structural property of the solvers with the oracle as referee.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::objective;
use crate::oracle;
use crate::safe::{compute_step_bounds, run_algorithm1, schulz_step, solve_delta, SafeParams};
use crate::sampling::{pair_with_product_spectrum, random_matrix, random_state};
use crate::system::{compute_kappa, generate_channels, init_state_algorithm1, BeamformerState, ChannelSet, KappaMode, SystemConfig};
use crate::trace::{ew_extremes, Phase, StepEvent};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 6] = [
    ("delta-root", check_delta),
    ("schulz-eigenvalue-range", check_schulz_range),
    ("mse-eigenvalue-floor", check_mse_floor),
    ("perturbation-identities", check_perturbation),
    ("gradient-finite-differences", check_gradients),
    ("safe-solver-monotone", check_safe_run),
];

/// Runs every check; errors count as failures.
pub fn run_selftest() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, check)| match check() {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
        })
        .collect()
}

fn check_delta() -> Result<(bool, String)> {
    let x = solve_delta();
    let g = x - x * x - (2.0 - x).ln();
    Ok((g.abs() <= 1e-12 && (1.6835..=1.6840).contains(&x), format!("delta = {x:.12}, residual = {g:.2e}")))
}

fn check_schulz_range() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for top in [0.5, 1.0, 1.5, 1.99] {
        for _ in 0..25 {
            let (e, w) = pair_with_product_spectrum(&mut rng, &[top, 0.4 * top, 0.05])?;
            let eig = oracle::product_eigenvalues(&e, &schulz_step(&e, &w))?;
            worst = worst.max(eig.max() - 1.0).max(-eig.min());
        }
    }
    Ok((worst <= 1e-9, format!("worst excursion outside [0, 1]: {worst:.2e}")))
}

fn check_mse_floor() -> Result<(bool, String)> {
    let cfg = SystemConfig::at_10db(4, 2, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut margin = f64::INFINITY;
    for seed in 0..100 {
        let mut ch = generate_channels(&cfg, seed);
        let mut state = random_state(&cfg, &mut rng, true);
        state.u = state.u.iter().map(|u| u.scale(3.0)).collect();
        for mode in [KappaMode::Frobenius, KappaMode::Oracle] {
            ch.kappa = compute_kappa(&ch.h, mode)?;
            let floor = cfg.noise_var / (cfg.power * ch.kappa + cfg.noise_var);
            for e in objective::mse_matrices_scaled(&cfg, &ch, &state)? {
                let low = oracle::hermitian_eigenvalues(&e, oracle::DEFAULT_EIG_TOL)?.min();
                margin = margin.min(low - floor);
            }
        }
    }
    Ok((margin >= -1e-9, format!("smallest margin over the floor: {margin:.3e}")))
}

fn check_perturbation() -> Result<(bool, String)> {
    let cfg = SystemConfig::at_10db(8, 4, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let gamma = 0.01;
    for seed in 0..20 {
        let ch = generate_channels(&cfg, seed);
        let s = random_state(&cfg, &mut rng, true);
        let gu = objective::grad_u_all(&cfg, &ch, &s)?;
        let gv = objective::grad_v_all(&cfg, &ch, &s)?;
        let diag = objective::perturbation_diagnostics(&cfg, &ch, &s, &gu, &gv)?;
        let e0 = objective::mse_matrices_scaled(&cfg, &ch, &s)?;
        let step = |blocks: &mut Vec<_>, grads: &[_]| {
            for (x, g) in blocks.iter_mut().zip(grads) {
                crate::linalg::ComplexMatrix::axpy(x, -gamma, g);
            }
        };
        let mut sv = s.clone();
        step(&mut sv.v, &gv);
        let mut su = s.clone();
        step(&mut su.u, &gu);
        let ev = objective::mse_matrices_scaled(&cfg, &ch, &sv)?;
        let eu = objective::mse_matrices_scaled(&cfg, &ch, &su)?;
        for k in 0..cfg.users {
            let scale = e0[k].frobenius_norm();
            let pv = &diag.a[k].scale(gamma * gamma) + &diag.b[k].scale(gamma);
            let pu = &diag.c[k].scale(gamma * gamma) + &diag.d[k].scale(gamma);
            worst = worst.max((&(&ev[k] - &e0[k]) - &pv).frobenius_norm() / scale);
            worst = worst.max((&(&eu[k] - &e0[k]) - &pu).frobenius_norm() / scale);
        }
    }
    Ok((worst <= 1e-10, format!("worst relative residual: {worst:.2e}")))
}

fn check_gradients() -> Result<(bool, String)> {
    let cfg = SystemConfig::at_10db(8, 2, 4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let ch = generate_channels(&cfg, seed);
        let s = random_state(&cfg, &mut rng, false);
        let gu = objective::grad_u_all(&cfg, &ch, &s)?;
        let gv = objective::grad_v_all(&cfg, &ch, &s)?;
        for k in 0..cfg.users {
            for (is_u, g) in [(true, &gu[k]), (false, &gv[k])] {
                let dir = random_matrix(&mut rng, g.rows(), g.cols());
                let shifted = |t: f64| -> Result<f64> {
                    let mut x = s.clone();
                    let block = if is_u { &mut x.u[k] } else { &mut x.v[k] };
                    block.axpy(t, &dir);
                    objective::trace_cost(&cfg, &ch, &x)
                };
                let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
                let an = g.real_inner(&dir);
                let scale = an.abs().max(g.frobenius_norm() * dir.frobenius_norm());
                worst = worst.max((fd - an).abs() / scale);
            }
        }
    }
    Ok((worst <= 1e-6, format!("worst relative error: {worst:.2e}")))
}

fn check_safe_run() -> Result<(bool, String)> {
    let cfg = SystemConfig::at_10db(4, 2, 2, 2);
    let params = SafeParams { iterations: 10, j_u: 8, j_w: 2, j_v: 4 };
    let mut violations = 0usize;
    let mut rows = 0usize;
    for seed in 0..5 {
        let ch = generate_channels(&cfg, seed);
        let bounds = compute_step_bounds(&cfg, ch.kappa, params.j_u, params.j_v)?;
        let mut state = init_state_algorithm1(&cfg, &ch)?;
        let mut last = f64::INFINITY;
        let mut obs = |ev: &StepEvent, c: &SystemConfig, h: &ChannelSet, st: &BeamformerState| -> Result<()> {
            let f = objective::cost_f(c, h, st)?.total;
            if f > last + 1e-9 * last.abs() {
                violations += 1;
            }
            last = f;
            rows += 1;
            let (lo, hi) = ew_extremes(c, h, st)?;
            let pre_schulz = ev.phase == Phase::UStep && ev.step == params.j_u;
            if (ev.phase == Phase::WStep && (lo < -1e-9 || hi > 1.0 + 1e-9)) || (pre_schulz && hi > bounds.delta + 1e-9) {
                violations += 1;
            }
            Ok(())
        };
        run_algorithm1(&cfg, &ch, &mut state, &params, &bounds, &mut obs)?;
    }
    Ok((violations == 0, format!("{violations} violations over {rows} rows")))
}
