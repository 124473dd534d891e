//! Scenario configuration, channel generation, and solver initializations.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{blocks_norm_sqr, ComplexMatrix};
use crate::objective;
use crate::oracle;

/// Antenna, user and stream counts plus power budget and priorities.
///
/// Serialized with the conventional single-letter keys (`M`, `K`, `N`, `d`,
/// `P`, `sigma2`, `alpha`) used by experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas at the base station.
    #[serde(rename = "M")]
    pub tx_antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    /// Receive antennas per user.
    #[serde(rename = "N")]
    pub rx_antennas: usize,
    /// Data streams per user.
    #[serde(rename = "d")]
    pub streams: usize,
    /// Transmit power budget (linear).
    #[serde(rename = "P")]
    pub power: f64,
    /// Noise variance (linear).
    #[serde(rename = "sigma2")]
    pub noise_var: f64,
    /// Per-user priorities. Empty means all ones.
    #[serde(rename = "alpha", default)]
    pub priorities: Vec<f64>,
}

impl SystemConfig {
    /// Scenario with unit priorities.
    pub fn new(tx_antennas: usize, users: usize, rx_antennas: usize, streams: usize, power: f64, noise_var: f64) -> Self {
        Self {
            tx_antennas,
            users,
            rx_antennas,
            streams,
            power,
            noise_var,
            priorities: vec![1.0; users],
        }
    }

    /// `(M, K, N, d)` at 10 dB SNR (`P = 10`, `σ² = 1`), unit priorities.
    pub fn at_10db(tx_antennas: usize, users: usize, rx_antennas: usize, streams: usize) -> Self {
        Self::new(tx_antennas, users, rx_antennas, streams, 10.0, 1.0)
    }

    /// Fills in default priorities and checks every invariant.
    pub fn validated(mut self) -> Result<Self> {
        if self.priorities.is_empty() {
            self.priorities = vec![1.0; self.users];
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.tx_antennas == 0 || self.users == 0 || self.rx_antennas == 0 {
            return bad("M, K and N must all be at least 1".into());
        }
        if self.streams == 0 || self.streams > self.tx_antennas.min(self.rx_antennas) {
            return bad(format!(
                "d = {} must satisfy 1 <= d <= min(M, N) = {}",
                self.streams,
                self.tx_antennas.min(self.rx_antennas)
            ));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return bad(format!("P must be positive, got {}", self.power));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.noise_var));
        }
        if self.priorities.len() != self.users {
            return bad(format!(
                "alpha has {} entries, expected K = {}",
                self.priorities.len(),
                self.users
            ));
        }
        if let Some(a) = self.priorities.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return bad(format!("every alpha must be positive, got {a}"));
        }
        Ok(())
    }

    pub fn priority(&self, k: usize) -> f64 {
        self.priorities.get(k).copied().unwrap_or(1.0)
    }

    /// Largest user priority.
    pub fn max_priority(&self) -> f64 {
        if self.priorities.is_empty() {
            return 1.0;
        }
        self.priorities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// How the singular-value bound on `H_kᴴ H_k` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaMode {
    /// `max_k ‖H_kᴴ H_k‖_F`; always an upper bound, no eigensolver needed.
    #[default]
    Frobenius,
    /// `max_k σ_max(H_kᴴ H_k)` from the oracle, padded by `1e-9` relative.
    Oracle,
}

/// Per-user channel matrices (`N x M`) and the bound `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub h: Vec<ComplexMatrix>,
    pub kappa: f64,
}

impl ChannelSet {
    /// Wraps user-supplied channels, computing `kappa` with the given mode.
    pub fn from_matrices(h: Vec<ComplexMatrix>, mode: KappaMode) -> Result<Self> {
        let kappa = compute_kappa(&h, mode)?;
        Ok(Self { h, kappa })
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn check_shapes(&self, config: &SystemConfig) -> Result<()> {
        if self.h.len() != config.users {
            return Err(Error::InvalidInput(format!(
                "{} channel matrices for K = {} users",
                self.h.len(),
                config.users
            )));
        }
        for h in &self.h {
            if h.shape() != (config.rx_antennas, config.tx_antennas) {
                return Err(Error::DimensionMismatch {
                    op: "channel",
                    left: h.shape(),
                    right: (config.rx_antennas, config.tx_antennas),
                });
            }
        }
        Ok(())
    }
}

/// Receive filters `U_k` (`N x d`), weights `W_k` (`d x d`) and transmit
/// beamformers `V_k` (`M x d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerState {
    pub u: Vec<ComplexMatrix>,
    pub w: Vec<ComplexMatrix>,
    pub v: Vec<ComplexMatrix>,
}

impl BeamformerState {
    pub fn zeros(config: &SystemConfig) -> Self {
        let (m, k, n, d) = (config.tx_antennas, config.users, config.rx_antennas, config.streams);
        Self {
            u: vec![ComplexMatrix::zeros(n, d); k],
            w: vec![ComplexMatrix::zeros(d, d); k],
            v: vec![ComplexMatrix::zeros(m, d); k],
        }
    }

    pub fn check_shapes(&self, config: &SystemConfig) -> Result<()> {
        let (m, k, n, d) = (config.tx_antennas, config.users, config.rx_antennas, config.streams);
        let groups: [(&[ComplexMatrix], (usize, usize), &'static str); 3] =
            [(&self.u, (n, d), "U block"), (&self.w, (d, d), "W block"), (&self.v, (m, d), "V block")];
        for (blocks, shape, op) in groups {
            if blocks.len() != k {
                return Err(Error::InvalidInput(format!("{op} count is {}, expected {k}", blocks.len())));
            }
            if let Some(b) = blocks.iter().find(|b| b.shape() != shape) {
                return Err(Error::DimensionMismatch {
                    op,
                    left: b.shape(),
                    right: shape,
                });
            }
        }
        Ok(())
    }

    /// `Σ_k Tr(V_k V_kᴴ)`.
    pub fn transmit_power(&self) -> f64 {
        total_power(&self.v)
    }

    /// `sqrt(‖U‖² + ‖W‖² + ‖V‖²)` over all blocks.
    pub fn norm(&self) -> f64 {
        (blocks_norm_sqr(&self.u) + blocks_norm_sqr(&self.w) + blocks_norm_sqr(&self.v)).sqrt()
    }
}

/// `Σ_k Tr(V_k V_kᴴ)`.
pub fn total_power(v: &[ComplexMatrix]) -> f64 {
    blocks_norm_sqr(v)
}

/// Factor `β` with `Σ Tr((βV)(βV)ᴴ) = P`.
pub fn power_scale_factor(v: &[ComplexMatrix], power: f64) -> Result<f64> {
    let p = total_power(v);
    if !(p > 0.0) {
        return Err(Error::Degenerate("all-zero transmit beamformers cannot be scaled to the power budget".into()));
    }
    Ok((power / p).sqrt())
}

/// Scales `V` in place to meet the power budget with equality; returns `β`.
pub fn scale_to_power(v: &mut [ComplexMatrix], power: f64) -> Result<f64> {
    let beta = power_scale_factor(v, power)?;
    for vk in v.iter_mut() {
        *vk = vk.scale(beta);
    }
    Ok(beta)
}

/// Draws i.i.d. circularly-symmetric unit-variance Gaussian channels.
///
/// Real and imaginary parts are independent `Normal(0, 1/2)`. The stream is
/// ChaCha8 seeded from `seed`, so a `(config, seed)` pair always yields the
/// same bits. `kappa` uses the Frobenius bound.
pub fn generate_channels(config: &SystemConfig, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h: Vec<ComplexMatrix> = (0..config.users)
        .map(|_| {
            ComplexMatrix::from_fn(config.rx_antennas, config.tx_antennas, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
        })
        .collect();
    let kappa = frobenius_kappa(&h);
    ChannelSet { h, kappa }
}

/// Seed of the `index`-th realization in a Monte-Carlo batch.
pub fn channel_seed(base: u64, index: u64) -> u64 {
    base ^ index
}

fn frobenius_kappa(h: &[ComplexMatrix]) -> f64 {
    h.iter().map(|hk| hk.adjoint_mul(hk).frobenius_norm()).fold(0.0, f64::max)
}

/// Upper bound on `σ_max(H_kᴴ H_k)` over all users.
pub fn compute_kappa(h: &[ComplexMatrix], mode: KappaMode) -> Result<f64> {
    match mode {
        KappaMode::Frobenius => Ok(frobenius_kappa(h)),
        KappaMode::Oracle => {
            let mut best: f64 = 0.0;
            for hk in h {
                let gram = hk.adjoint_mul(hk).hermitian_part();
                best = best.max(oracle::max_singular_value(&gram, oracle::DEFAULT_EIG_TOL)?);
            }
            Ok(best * (1.0 + 1e-9))
        }
    }
}

/// `V_k = H̃_kᴴ`, where `H̃_k` stacks the `d` strongest rows of `H_k` (ties
/// to the lower index, kept in index order), then scaled to the power budget.
pub fn init_v_strongest_rows(config: &SystemConfig, channels: &ChannelSet) -> Result<Vec<ComplexMatrix>> {
    let d = config.streams;
    let mut v: Vec<ComplexMatrix> = channels
        .h
        .iter()
        .map(|hk| {
            let mut idx: Vec<usize> = (0..hk.rows()).collect();
            let norms = hk.row_norms_sqr();
            // stable sort keeps lower index first on ties
            idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
            let mut chosen: Vec<usize> = idx.into_iter().take(d).collect();
            chosen.sort_unstable();
            hk.select_rows(&chosen).adjoint()
        })
        .collect();
    scale_to_power(&mut v, config.power)?;
    Ok(v)
}

/// Initial point of the theorem-backed solver: strongest-row `V` at full
/// power, `U = 0`, `W = I`.
pub fn init_state_algorithm1(config: &SystemConfig, channels: &ChannelSet) -> Result<BeamformerState> {
    let (k, n, d) = (config.users, config.rx_antennas, config.streams);
    Ok(BeamformerState {
        u: vec![ComplexMatrix::zeros(n, d); k],
        w: vec![ComplexMatrix::identity(d); k],
        v: init_v_strongest_rows(config, channels)?,
    })
}

/// Coefficients `(a, b)` of `Tr(E_k(ρJ, V)) = a ρ² - 2 b ρ + d` for real `ρ`,
/// with `J` the `N x d` rectangular identity.
fn trace_quadratic(config: &SystemConfig, channels: &ChannelSet, v: &[ComplexMatrix], k: usize) -> (f64, f64) {
    let d = config.streams;
    let noise = config.noise_var * total_power(v) / config.power;
    let hk = &channels.h[k];
    // Jᴴ X keeps the first d rows of X
    let top_rows = |x: &ComplexMatrix| -> ComplexMatrix { x.select_rows(&(0..d).collect::<Vec<_>>()) };
    let mut a = noise * d as f64;
    for vm in v {
        a += top_rows(&(hk * vm)).frobenius_norm_sqr();
    }
    let b = top_rows(&(hk * &v[k])).trace().map(|t| t.re).unwrap_or(0.0);
    (a, b)
}

/// `U_k = ρ_k* J` with `ρ_k*` minimizing `Tr(E_k(ρ J, V))` over real `ρ`.
pub fn init_u_scaled_identity(
    config: &SystemConfig,
    channels: &ChannelSet,
    v: &[ComplexMatrix],
) -> Result<Vec<ComplexMatrix>> {
    let (n, d) = (config.rx_antennas, config.streams);
    let v_is_zero = v.iter().all(ComplexMatrix::is_zero);
    (0..config.users)
        .map(|k| {
            let rho = if v_is_zero {
                0.0
            } else {
                let (a, b) = trace_quadratic(config, channels, v, k);
                if a <= 0.0 {
                    return Err(Error::Internal(format!("trace quadratic has non-positive curvature {a}")));
                }
                b / a
            };
            Ok(ComplexMatrix::rect_identity(n, d).scale(rho))
        })
        .collect()
}

/// `W_k = I / Tr(E_k)` per user.
pub fn init_w_trace_scaled(e: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
    e.iter()
        .map(|ek| {
            let t = ek.trace()?.re;
            if !(t > 0.0) {
                return Err(Error::InvalidInput(format!("Tr(E_k) = {t} is not positive")));
            }
            Ok(ComplexMatrix::identity(ek.rows()).scale(1.0 / t))
        })
        .collect()
}

/// Starting point of the unfolded solver before its warm-start Schulz
/// iterations: strongest-row `V`, scaled-identity `U`, trace-scaled `W`.
pub fn init_state_unfolded(config: &SystemConfig, channels: &ChannelSet) -> Result<BeamformerState> {
    let v = init_v_strongest_rows(config, channels)?;
    let u = init_u_scaled_identity(config, channels, &v)?;
    let mut state = BeamformerState {
        u,
        w: vec![ComplexMatrix::identity(config.streams); config.users],
        v,
    };
    let e = objective::mse_matrices_scaled(config, channels, &state)?;
    state.w = init_w_trace_scaled(&e)?;
    Ok(state)
}
