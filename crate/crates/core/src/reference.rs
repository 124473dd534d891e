//! Closed-form block coordinate descent baseline. Uses explicit inverses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::objective;
use crate::oracle;
use crate::system::{power_scale_factor, BeamformerState, ChannelSet, SystemConfig};
use crate::trace::{Observer, Phase, StepEvent};

/// Iteration cap and weighted-sum-rate stopping tolerance (bits/use).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRunConfig {
    #[serde(rename = "L")]
    pub max_iters: usize,
    #[serde(default = "default_wsr_tol")]
    pub wsr_tol: f64,
}

fn default_wsr_tol() -> f64 {
    1e-4
}

impl ReferenceRunConfig {
    pub fn new(max_iters: usize) -> Self {
        Self { max_iters, wsr_tol: default_wsr_tol() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("L must be at least 1".into()));
        }
        if !(self.wsr_tol > 0.0) {
            return Err(Error::InvalidInput(format!("wsr_tol must be positive, got {}", self.wsr_tol)));
        }
        Ok(())
    }
}

/// How a reference run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Weighted sum rate after each iteration, starting with the initial `V`.
    pub wsr: Vec<f64>,
}

/// `U_k = Q_k⁻¹ H_k V_k`.
pub fn update_u_closed_form(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
) -> Result<Vec<ComplexMatrix>> {
    state.check_shapes(config)?;
    channels.check_shapes(config)?;
    if state.v.iter().all(ComplexMatrix::is_zero) {
        return Err(Error::Singular { pivot: 0.0 });
    }
    (0..config.users)
        .map(|k| {
            let q = objective::q_matrix(config, channels, &state.v, k);
            let q_inv = oracle::explicit_inverse(&q)?;
            Ok(&q_inv * &(&channels.h[k] * &state.v[k]))
        })
        .collect()
}

/// `W_k = E_k⁻¹`, inverting the full MSE matrix.
pub fn update_w_closed_form(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
) -> Result<Vec<ComplexMatrix>> {
    objective::mse_matrices_scaled(config, channels, state)?
        .iter()
        .map(|ek| match oracle::explicit_inverse(ek) {
            Ok(inv) => Ok(inv.hermitian_part()),
            Err(e @ (Error::Singular { .. } | Error::IllConditioned { .. })) => {
                Err(Error::Internal(format!("MSE matrix not invertible: {e}")))
            }
            Err(e) => Err(e),
        })
        .collect()
}

/// `V_k = α_k R⁻¹ H_kᴴ U_k W_k`.
pub fn update_v_closed_form(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
) -> Result<Vec<ComplexMatrix>> {
    state.check_shapes(config)?;
    channels.check_shapes(config)?;
    if state.u.iter().zip(&state.w).all(|(u, w)| (u * w).is_zero()) {
        return Err(Error::Degenerate("every U_k W_k is zero, R is singular".into()));
    }
    let r = objective::r_matrix(config, channels, state);
    let r_inv = oracle::explicit_inverse(&r).map_err(|e| Error::Degenerate(format!("R not invertible: {e}")))?;
    Ok((0..config.users)
        .map(|k| {
            let pull = channels.h[k].adjoint_mul(&(&state.u[k] * &state.w[k]));
            (&r_inv * &pull).scale(config.priority(k))
        })
        .collect())
}

/// Iterates `U`, `W`, `V` updates followed by `V ← βV`, `U ← U/β`.
///
/// Stops after `max_iters` iterations or once the weighted sum rate gains at
/// most `wsr_tol`. On exit `U` and `W` are refreshed for the final `V`, so the
/// returned state is block-optimal in both. Emits an `init` event, one
/// `scale` event per iteration and a closing `refresh` event.
pub fn run_reference(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &mut BeamformerState,
    run_config: &ReferenceRunConfig,
    observer: &mut impl Observer,
) -> Result<ReferenceOutcome> {
    run_config.validate()?;
    state.check_shapes(config)?;
    channels.check_shapes(config)?;
    let mut wsr = vec![objective::rate_and_wsr(config, channels, &state.v)?.wsr];
    observer.observe(&StepEvent { iter: 0, phase: Phase::Init, step: 0 }, config, channels, state)?;

    let mut converged = false;
    let mut iter = 0;
    while iter < run_config.max_iters {
        iter += 1;
        state.u = update_u_closed_form(config, channels, state)?;
        state.w = update_w_closed_form(config, channels, state)?;
        state.v = update_v_closed_form(config, channels, state)?;
        let beta = power_scale_factor(&state.v, config.power)?;
        for vk in &mut state.v {
            *vk = vk.scale(beta);
        }
        for uk in &mut state.u {
            *uk = uk.scale(1.0 / beta);
        }
        observer.observe(&StepEvent { iter, phase: Phase::Scale, step: 1 }, config, channels, state)?;
        let now = objective::rate_and_wsr(config, channels, &state.v)?.wsr;
        let gain = now - wsr[wsr.len() - 1];
        wsr.push(now);
        if gain <= run_config.wsr_tol {
            converged = true;
            break;
        }
    }

    state.u = update_u_closed_form(config, channels, state)?;
    state.w = update_w_closed_form(config, channels, state)?;
    observer.observe(&StepEvent { iter, phase: Phase::Refresh, step: 1 }, config, channels, state)?;
    Ok(ReferenceOutcome { iterations: iter, converged, wsr })
}
