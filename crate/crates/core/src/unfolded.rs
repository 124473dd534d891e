//! Forward pass of the unfolded, inverse-free solver: Nesterov-style steps
//! with exact line search, spectral renormalization of `W`, warm-started
//! Schulz iterations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{blocks_norm_sqr, ComplexMatrix};
use crate::objective;
use crate::safe::schulz_step;
use crate::system::{init_state_unfolded, scale_to_power, BeamformerState, ChannelSet, SystemConfig};
use crate::trace::{Observer, Phase, StepEvent};

/// Which block a step acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    U,
    V,
}

/// Layer count, inner counts and per-step multipliers, indexed
/// `[layer][step]`. Missing arrays default to `φ = 1`, `θ = ξ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldParams {
    #[serde(rename = "L")]
    pub layers: usize,
    #[serde(rename = "J_u")]
    pub j_u: usize,
    #[serde(rename = "J_w")]
    pub j_w: usize,
    #[serde(rename = "J_v")]
    pub j_v: usize,
    #[serde(default)]
    pub phi_u: Vec<Vec<f64>>,
    #[serde(default)]
    pub phi_v: Vec<Vec<f64>>,
    #[serde(default)]
    pub theta_u: Vec<Vec<f64>>,
    #[serde(default)]
    pub theta_v: Vec<Vec<f64>>,
    #[serde(default)]
    pub xi_u: Vec<Vec<f64>>,
    #[serde(default)]
    pub xi_v: Vec<Vec<f64>>,
}

/// Multipliers of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub phi: f64,
    pub theta: f64,
    pub xi: f64,
}

impl Default for StepParams {
    fn default() -> Self {
        Self { phi: 1.0, theta: 0.0, xi: 0.0 }
    }
}

impl UnfoldParams {
    /// Plain exact-line-search steps: `φ = 1`, no momentum.
    pub fn plain(layers: usize, j_u: usize, j_w: usize, j_v: usize) -> Self {
        let mut p = Self {
            layers,
            j_u,
            j_w,
            j_v,
            phi_u: Vec::new(),
            phi_v: Vec::new(),
            theta_u: Vec::new(),
            theta_v: Vec::new(),
            xi_u: Vec::new(),
            xi_v: Vec::new(),
        };
        p.fill_defaults();
        p
    }

    /// Replaces empty arrays by their defaults.
    pub fn fill_defaults(&mut self) {
        let fill = |a: &mut Vec<Vec<f64>>, j: usize, value: f64, layers: usize| {
            if a.is_empty() {
                *a = vec![vec![value; j]; layers];
            }
        };
        fill(&mut self.phi_u, self.j_u, 1.0, self.layers);
        fill(&mut self.theta_u, self.j_u, 0.0, self.layers);
        fill(&mut self.xi_u, self.j_u, 0.0, self.layers);
        fill(&mut self.phi_v, self.j_v, 1.0, self.layers);
        fill(&mut self.theta_v, self.j_v, 0.0, self.layers);
        fill(&mut self.xi_v, self.j_v, 0.0, self.layers);
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidInput("L must be at least 1".into()));
        }
        let arrays: [(&str, &Vec<Vec<f64>>, usize); 6] = [
            ("phi_u", &self.phi_u, self.j_u),
            ("theta_u", &self.theta_u, self.j_u),
            ("xi_u", &self.xi_u, self.j_u),
            ("phi_v", &self.phi_v, self.j_v),
            ("theta_v", &self.theta_v, self.j_v),
            ("xi_v", &self.xi_v, self.j_v),
        ];
        for (name, a, j) in arrays {
            if a.len() != self.layers || a.iter().any(|row| row.len() != j) {
                return Err(Error::InvalidInput(format!("{name} must have shape ({}, {j})", self.layers)));
            }
            if a.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} has a non-finite entry")));
            }
        }
        if let Some(phi) = self.phi_u.iter().chain(&self.phi_v).flatten().find(|p| !(**p > 0.0 && **p < 2.0)) {
            return Err(Error::InvalidInput(format!("every phi must lie in (0, 2), got {phi}")));
        }
        Ok(())
    }

    pub fn step(&self, block: Block, layer: usize, step: usize) -> StepParams {
        let (phi, theta, xi) = match block {
            Block::U => (&self.phi_u, &self.theta_u, &self.xi_u),
            Block::V => (&self.phi_v, &self.theta_v, &self.xi_v),
        };
        StepParams {
            phi: phi[layer][step],
            theta: theta[layer][step],
            xi: xi[layer][step],
        }
    }
}

fn block(state: &BeamformerState, which: Block) -> &[ComplexMatrix] {
    match which {
        Block::U => &state.u,
        Block::V => &state.v,
    }
}

fn block_mut(state: &mut BeamformerState, which: Block) -> &mut Vec<ComplexMatrix> {
    match which {
        Block::U => &mut state.u,
        Block::V => &mut state.v,
    }
}

fn gradients(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState, which: Block) -> Result<Vec<ComplexMatrix>> {
    match which {
        Block::U => objective::grad_u_all(config, channels, state),
        Block::V => objective::grad_v_all(config, channels, state),
    }
}

/// Step length minimizing `f(X - γ D)` along `direction` from the current
/// state, where `X` is the `which` block.
///
/// With the other blocks fixed, `f` is quadratic in `γ`; the coefficients
/// come from an exact fit through `γ ∈ {0, s, 2s}`, `s = 1/(1 + ‖D‖_F)`.
/// Returns 0 when the slice is flat or concave.
pub fn optimal_step_length(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
    direction: &[ComplexMatrix],
    which: Block,
) -> Result<f64> {
    let probe = 1.0 / (1.0 + blocks_norm_sqr(direction).sqrt());
    step_length_with_probe(config, channels, state, direction, which, probe)
}

pub(crate) fn step_length_with_probe(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &BeamformerState,
    direction: &[ComplexMatrix],
    which: Block,
    probe: f64,
) -> Result<f64> {
    if direction.len() != block(state, which).len() {
        return Err(Error::InvalidInput("one direction block per user is required".into()));
    }
    if direction.iter().all(ComplexMatrix::is_zero) {
        return Err(Error::InvalidInput("line search along a zero direction".into()));
    }
    let mut trial = state.clone();
    let mut at = |gamma: f64| -> Result<f64> {
        for ((t, x), dk) in block_mut(&mut trial, which).iter_mut().zip(block(state, which)).zip(direction) {
            *t = x.clone();
            t.axpy(-gamma, dk);
        }
        objective::trace_cost(config, channels, &trial)
    };
    let (f0, f1, f2) = (at(0.0)?, at(probe)?, at(2.0 * probe)?);
    let a = (f2 - 2.0 * f1 + f0) / (2.0 * probe * probe);
    let b = (f2 - 4.0 * f1 + 3.0 * f0) / (2.0 * probe);
    if a <= 1e-18 {
        return Ok(0.0);
    }
    Ok(b / (2.0 * a))
}

/// Row/column absolute-sum bound on the spectral radius of a square matrix.
pub fn eta_spectral_bound(x: &ComplexMatrix) -> Result<f64> {
    if !x.is_square() {
        return Err(Error::NotSquare { op: "eta_spectral_bound", shape: x.shape() });
    }
    let n = x.rows();
    let col_sums: Vec<f64> = (0..n).map(|j| (0..n).map(|i| x[(i, j)].norm()).sum()).collect();
    Ok((0..n)
        .map(|i| x.row(i).iter().zip(&col_sums).map(|(z, c)| z.norm() * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

/// `W_k ← W_k / η(E_k W_k)` for every user.
pub fn renormalize_w(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> Result<Vec<ComplexMatrix>> {
    let e = objective::mse_matrices_scaled(config, channels, state)?;
    e.iter()
        .zip(&state.w)
        .map(|(ek, wk)| {
            let eta = eta_spectral_bound(&(ek * wk))?;
            if !(eta > 0.0) {
                return Err(Error::Degenerate("W_k is zero, cannot renormalize".into()));
            }
            Ok(wk.scale(1.0 / eta))
        })
        .collect()
}

/// `J` accelerated steps on one block within a layer.
///
/// Step `j` sets `X⁺ = X + θ X̄ - φ γ* ∇f(X + ξ X̄)` and `X̄ ← X⁺ - X`, with
/// `X̄` starting at the layer's initial `X`. `γ*` is the exact line-search
/// step from `X` along the look-ahead gradient.
#[allow(clippy::too_many_arguments)]
pub fn nesterov_gd_steps(
    config: &SystemConfig,
    channels: &ChannelSet,
    state: &mut BeamformerState,
    which: Block,
    params: &UnfoldParams,
    layer: usize,
    iter: usize,
    observer: &mut impl Observer,
) -> Result<()> {
    let (count, phase) = match which {
        Block::U => (params.j_u, Phase::UStep),
        Block::V => (params.j_v, Phase::VStep),
    };
    let mut momentum: Vec<ComplexMatrix> = block(state, which).to_vec();
    for j in 0..count {
        let sp = params.step(which, layer, j);
        let mut ahead = state.clone();
        for (y, m) in block_mut(&mut ahead, which).iter_mut().zip(&momentum) {
            y.axpy(sp.xi, m);
        }
        let direction = gradients(config, channels, &ahead, which)?;
        let gamma = if direction.iter().all(ComplexMatrix::is_zero) {
            0.0
        } else {
            optimal_step_length(config, channels, state, &direction, which)?
        };
        let x = block_mut(state, which);
        for ((xk, mk), dk) in x.iter_mut().zip(momentum.iter_mut()).zip(&direction) {
            let prev = xk.clone();
            xk.axpy(sp.theta, mk);
            if gamma != 0.0 {
                xk.axpy(-sp.phi * gamma, dk);
            }
            *mk = &*xk - &prev;
        }
        observer.observe(&StepEvent { iter, phase, step: j + 1 }, config, channels, state)?;
    }
    Ok(())
}

fn schulz_phase(
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
        observer.observe(&StepEvent { iter, phase: Phase::WStep, step }, config, channels, state)?;
    }
    Ok(())
}

/// Full forward pass; returns the final state.
///
/// Initializes with strongest-row `V`, scaled-identity `U`, trace-scaled `W`
/// and `J_w` warm-start Schulz iterations (reported as iteration 0). Each
/// layer then runs U steps, `W` renormalization, Schulz iterations, V steps
/// and a final `V`-only power scaling. Oracle-free unless the observer is not.
pub fn run_algorithm2(
    config: &SystemConfig,
    channels: &ChannelSet,
    params: &UnfoldParams,
    observer: &mut impl Observer,
) -> Result<BeamformerState> {
    params.validate()?;
    channels.check_shapes(config)?;
    let mut state = init_state_unfolded(config, channels)?;
    observer.observe(&StepEvent { iter: 0, phase: Phase::Init, step: 0 }, config, channels, &state)?;
    schulz_phase(config, channels, &mut state, params.j_w, 0, observer)?;
    for layer in 0..params.layers {
        let iter = layer + 1;
        nesterov_gd_steps(config, channels, &mut state, Block::U, params, layer, iter, observer)?;
        state.w = renormalize_w(config, channels, &state)?;
        observer.observe(&StepEvent { iter, phase: Phase::Renorm, step: 1 }, config, channels, &state)?;
        schulz_phase(config, channels, &mut state, params.j_w, iter, observer)?;
        nesterov_gd_steps(config, channels, &mut state, Block::V, params, layer, iter, observer)?;
        scale_to_power(&mut state.v, config.power)?;
        observer.observe(&StepEvent { iter, phase: Phase::Scale, step: 1 }, config, channels, &state)?;
    }
    Ok(state)
}
