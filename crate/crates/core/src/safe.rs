//! Inverse-free solver with provably monotone step sizes.
//!
//! Each outer iteration takes `J_u` gradient steps on `U`, `J_w` Schulz
//! iterations on `W` and `J_v` gradient steps on `V`, each `V` step followed
//! by the reciprocal rescaling that restores the power budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::objective;
use crate::system::{power_scale_factor, BeamformerState, ChannelSet, SystemConfig};
use crate::trace::{Observer, Phase, StepEvent};

const DELTA_TOL: f64 = 1e-12;

fn delta_equation(x: f64) -> f64 {
    x - x * x - (2.0 - x).ln()
}

/// Unique root of `x - x² - ln(2 - x)` in `(1, 2)`, by bisection.
///
/// `x = 1` is a double root to exclude: `g` dips below zero just above it
/// and tends to `+∞` at 2.
pub fn solve_delta() -> f64 {
    let (mut lo, mut hi) = (1.0, 2.0 - 1e-15);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let g = delta_equation(mid);
        if g.abs() <= DELTA_TOL {
            break;
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Curvature and perturbation constants plus the resulting step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBounds {
    pub delta: f64,
    pub l_u: f64,
    pub l_v: f64,
    pub mu_u: f64,
    pub mu_v: f64,
    pub l_a: f64,
    pub l_b: f64,
    pub l_c: f64,
    pub l_d: f64,
    pub nu_u: f64,
    pub nu_v: f64,
    pub gamma_u: f64,
    pub gamma_v: f64,
}

impl StepBounds {
    /// Same constants with caller-chosen steps (no monotonicity guarantee).
    pub fn with_steps(mut self, gamma_u: f64, gamma_v: f64) -> Self {
        self.gamma_u = gamma_u;
        self.gamma_v = gamma_v;
        self
    }

    /// Right-hand side `(δ - 1) / (J_u + J_v)` of the step-cap quadratics.
    pub fn cap_budget(&self, j_u: usize, j_v: usize) -> f64 {
        (self.delta - 1.0) / (j_u + j_v) as f64
    }
}

/// Positive root of `a x² + b x = c`, written to avoid cancellation.
fn positive_root(a: f64, b: f64, c: f64) -> f64 {
    2.0 * c / (b + (b * b + 4.0 * a * c).sqrt())
}

/// Evaluates every step-size constant for the scenario.
pub fn compute_step_bounds(config: &SystemConfig, kappa: f64, j_u: usize, j_v: usize) -> Result<StepBounds> {
    config.validate()?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    if j_u == 0 || j_v == 0 {
        return Err(Error::InvalidInput("J_u and J_v must be at least 1".into()));
    }
    let delta = solve_delta();
    let alpha = config.max_priority();
    let (p, s2) = (config.power, config.noise_var);
    let (k, d) = (config.users as f64, config.streams as f64);
    let pk = p * kappa;

    let l_u = 2.0 * alpha * delta * (pk + s2).powi(2) / s2;
    let l_v = 2.0 * alpha * k * delta * (pk + d * s2) / (p * s2);

    let mu_u = 2.0 * alpha * delta * (pk + s2).sqrt() * (1.0 + (pk + (pk * (pk + s2)).sqrt()) / s2);
    let l_c = mu_u * mu_u * delta * (pk + s2).powi(2) / s2;
    let l_d = 2.0 * mu_u * delta * (pk + s2) * (pk.sqrt() + (pk + s2).sqrt()) / s2;

    let mu_v = 2.0 * alpha * delta * (k * pk + (pk * (pk + s2)).sqrt() + k * d * s2) / (p.sqrt() * s2);
    let l_a = k * mu_v * mu_v * delta * (kappa + d * s2 / p) / s2;
    let l_b = (2.0 * k * p.sqrt() * mu_v * delta * (kappa + d.sqrt() * s2 / p)
        + 2.0 * mu_v * delta * (kappa * (pk + s2)).sqrt())
        / s2;

    let budget = (delta - 1.0) / (j_u + j_v) as f64;
    let nu_u = positive_root(l_c, l_d, budget);
    let nu_v = positive_root(l_a, l_b, budget);
    Ok(StepBounds {
        delta,
        l_u,
        l_v,
        mu_u,
        mu_v,
        l_a,
        l_b,
        l_c,
        l_d,
        nu_u,
        nu_v,
        gamma_u: (1.0 / l_u).min(nu_u),
        gamma_v: (1.0 / l_v).min(nu_v),
    })
}

/// Inner iteration counts of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeParams {
    #[serde(rename = "L")]
    pub iterations: usize,
    #[serde(rename = "J_u")]
    pub j_u: usize,
    #[serde(rename = "J_w")]
    pub j_w: usize,
    #[serde(rename = "J_v")]
    pub j_v: usize,
}

/// One Schulz iteration `W (2I - E W)`, re-Hermitized.
pub fn schulz_step(e: &ComplexMatrix, w: &ComplexMatrix) -> ComplexMatrix {
    let mut two_minus = (e * w).scale(-1.0);
    two_minus.add_diag(2.0);
    (w * &two_minus).hermitian_part()
}

fn emit(
    observer: &mut impl Observer,
    iter: usize,
    phase: Phase,
    step: usize,
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
) -> Result<()> {
    observer.observe(&StepEvent { iter, phase, step }, config, channels, state)
}

/// `J_u` plain gradient steps on all `U_k` simultaneously.
pub fn gd_steps_u(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &mut BeamformerState,
    gamma_u: f64,
    j_u: usize,
    iter: usize,
    observer: &mut impl Observer,
) -> Result<()> {
    for step in 1..=j_u {
        let grads = objective::grad_u_all(config, channels, state)?;
        for (uk, g) in state.u.iter_mut().zip(&grads) {
            uk.axpy(-gamma_u, g);
        }
        emit(observer, iter, Phase::UStep, step, config, channels, state)?;
    }
    Ok(())
}

/// `J_w` Schulz iterations on all `W_k`, with `E_k` fixed by `U` and `V`.
pub fn schulz_steps_w(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &mut BeamformerState,
    j_w: usize,
    iter: usize,
    observer: &mut impl Observer,
) -> Result<()> {
    if j_w == 0 {
        return Ok(());
    }
    let e = objective::mse_matrices_scaled(config, channels, state)?;
    for step in 1..=j_w {
        for (wk, ek) in state.w.iter_mut().zip(&e) {
            *wk = schulz_step(ek, wk);
        }
        emit(observer, iter, Phase::WStep, step, config, channels, state)?;
    }
    Ok(())
}

/// `J_v` gradient steps on all `V_k`, each followed by `V ← βV`, `U ← U/β`.
pub fn gd_steps_v_with_rescale(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &mut BeamformerState,
    gamma_v: f64,
    j_v: usize,
    iter: usize,
    observer: &mut impl Observer,
) -> Result<()> {
    for step in 1..=j_v {
        let grads = objective::grad_v_all(config, channels, state)?;
        for (vk, g) in state.v.iter_mut().zip(&grads) {
            vk.axpy(-gamma_v, g);
        }
        let beta = power_scale_factor(&state.v, config.power)?;
        for vk in &mut state.v {
            *vk = vk.scale(beta);
        }
        for uk in &mut state.u {
            *uk = uk.scale(1.0 / beta);
        }
        emit(observer, iter, Phase::VStep, step, config, channels, state)?;
    }
    Ok(())
}

/// Runs `L` outer iterations from `state`, reporting every update.
///
/// `state` should come from `init_state_algorithm1`; the theorem's
/// guarantees assume its `λ(E_k W_k) = 1` start. Nothing on this path inverts
/// or eigendecomposes a matrix; only the observer may.
pub fn run_algorithm1(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &mut BeamformerState,
    params: &SafeParams,
    bounds: &StepBounds,
    observer: &mut impl Observer,
) -> Result<()> {
    channels.check_shapes(config)?;
    state.check_shapes(config)?;
    emit(observer, 0, Phase::Init, 0, config, channels, state)?;
    for iter in 1..=params.iterations {
        gd_steps_u(config, channels, state, bounds.gamma_u, params.j_u, iter, observer)?;
        schulz_steps_w(config, channels, state, params.j_w, iter, observer)?;
        gd_steps_v_with_rescale(config, channels, state, bounds.gamma_v, params.j_v, iter, observer)?;
    }
    Ok(())
}
