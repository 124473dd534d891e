//! Per-step observation of solver runs and the trace rows built from it.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::blocks_norm_sqr;
use crate::objective;
use crate::oracle;
use crate::system::{BeamformerState, ChannelSet, SystemConfig};

/// Which update just finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "init")]
    Init,
    #[serde(rename = "u-step")]
    UStep,
    #[serde(rename = "renorm")]
    Renorm,
    #[serde(rename = "w-step")]
    WStep,
    #[serde(rename = "v-step")]
    VStep,
    #[serde(rename = "scale")]
    Scale,
    #[serde(rename = "refresh")]
    Refresh,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::UStep => "u-step",
            Phase::Renorm => "renorm",
            Phase::WStep => "w-step",
            Phase::VStep => "v-step",
            Phase::Scale => "scale",
            Phase::Refresh => "refresh",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position of an event inside a run. `iter` is 0 for initialization and
/// 1-based afterwards; `step` counts inner steps within the phase, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    pub iter: usize,
    pub phase: Phase,
    pub step: usize,
}

/// Receives the solver state after every update.
pub trait Observer {
    fn observe(
        &mut self,
        event: &StepEvent,
        config: &SystemConfig,
        channels: &ChannelSet,
        state: &BeamformerState,
    ) -> Result<()>;
}

/// Discards all events.
impl Observer for () {
    fn observe(&mut self, _: &StepEvent, _: &SystemConfig, _: &ChannelSet, _: &BeamformerState) -> Result<()> {
        Ok(())
    }
}

impl<F> Observer for F
where
    F: FnMut(&StepEvent, &SystemConfig, &ChannelSet, &BeamformerState) -> Result<()>,
{
    fn observe(
        &mut self,
        event: &StepEvent,
        config: &SystemConfig,
        channels: &ChannelSet,
        state: &BeamformerState,
    ) -> Result<()> {
        self(event, config, channels, state)
    }
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub run_id: String,
    pub algo: String,
    pub channel: u64,
    pub iter: usize,
    pub phase: Phase,
    pub f_nats: Option<f64>,
    pub wsr_bits: Option<f64>,
    pub power: f64,
    pub grad_norm_u: Option<f64>,
    pub grad_norm_v: Option<f64>,
    pub lambda_min_ew: Option<f64>,
    pub lambda_max_ew: Option<f64>,
    pub wall_nanos: Option<u64>,
}

/// How much a [`TraceRecorder`] computes per row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceLevel {
    /// Power and gradient norms only; never touches the oracle.
    Light,
    /// Adds cost and weighted sum rate.
    #[default]
    Metrics,
    /// Adds the extreme eigenvalues of `E_k W_k` over all users.
    Diagnostics,
}

/// Observer that turns events into [`IterationTrace`] rows.
#[derive(Debug)]
pub struct TraceRecorder {
    run_id: String,
    algo: String,
    channel: u64,
    level: TraceLevel,
    phases: Option<Vec<Phase>>,
    last: Instant,
    rows: Vec<IterationTrace>,
}

impl TraceRecorder {
    pub fn new(run_id: impl Into<String>, algo: impl Into<String>, channel: u64, level: TraceLevel) -> Self {
        Self {
            run_id: run_id.into(),
            algo: algo.into(),
            channel,
            level,
            phases: None,
            last: Instant::now(),
            rows: Vec::new(),
        }
    }

    /// Records only events of the listed phases.
    pub fn only_phases(mut self, phases: &[Phase]) -> Self {
        self.phases = Some(phases.to_vec());
        self
    }

    pub fn rows(&self) -> &[IterationTrace] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<IterationTrace> {
        self.rows
    }
}

impl Observer for TraceRecorder {
    fn observe(
        &mut self,
        event: &StepEvent,
        config: &SystemConfig,
        channels: &ChannelSet,
        state: &BeamformerState,
    ) -> Result<()> {
        if let Some(phases) = &self.phases {
            if !phases.contains(&event.phase) {
                return Ok(());
            }
        }
        let elapsed = self.last.elapsed().as_nanos() as u64;
        let gu = objective::grad_u_all(config, channels, state)?;
        let gv = objective::grad_v_all(config, channels, state)?;
        let mut row = IterationTrace {
            run_id: self.run_id.clone(),
            algo: self.algo.clone(),
            channel: self.channel,
            iter: event.iter,
            phase: event.phase,
            f_nats: None,
            wsr_bits: None,
            power: state.transmit_power(),
            grad_norm_u: Some(blocks_norm_sqr(&gu).sqrt()),
            grad_norm_v: Some(blocks_norm_sqr(&gv).sqrt()),
            lambda_min_ew: None,
            lambda_max_ew: None,
            wall_nanos: Some(elapsed),
        };
        if self.level >= TraceLevel::Metrics {
            row.f_nats = Some(objective::cost_f(config, channels, state)?.total);
            row.wsr_bits = Some(objective::rate_and_wsr(config, channels, &state.v)?.wsr);
        }
        if self.level >= TraceLevel::Diagnostics {
            let (lo, hi) = ew_extremes(config, channels, state)?;
            row.lambda_min_ew = Some(lo);
            row.lambda_max_ew = Some(hi);
        }
        self.rows.push(row);
        // exclude the bookkeeping above from the next row's wall time
        self.last = Instant::now();
        Ok(())
    }
}

/// Smallest and largest eigenvalue of `E_k W_k` over all users (oracle).
pub fn ew_extremes(config: &SystemConfig, channels: &ChannelSet, state: &BeamformerState) -> Result<(f64, f64)> {
    let e = objective::mse_matrices_scaled(config, channels, state)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (ek, wk) in e.iter().zip(&state.w) {
        let eig = oracle::product_eigenvalues(ek, wk)?;
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_channels, init_state_algorithm1};

    #[test]
    fn phase_labels() {
        assert_eq!(Phase::UStep.to_string(), "u-step");
        assert_eq!(serde_json::to_string(&Phase::VStep).unwrap(), "\"v-step\"");
    }

    #[test]
    fn recorder_levels() {
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let ch = generate_channels(&cfg, 1);
        let s = init_state_algorithm1(&cfg, &ch).unwrap();
        let ev = StepEvent { iter: 0, phase: Phase::Init, step: 0 };

        let mut light = TraceRecorder::new("r", "a", 0, TraceLevel::Light);
        oracle::reset_call_count();
        light.observe(&ev, &cfg, &ch, &s).unwrap();
        assert_eq!(oracle::call_count(), 0);
        assert!(light.rows()[0].f_nats.is_none());

        let mut full = TraceRecorder::new("r", "a", 0, TraceLevel::Diagnostics);
        full.observe(&ev, &cfg, &ch, &s).unwrap();
        let row = &full.rows()[0];
        assert!((row.f_nats.unwrap() - 4.0).abs() < 1e-12);
        assert!((row.lambda_max_ew.unwrap() - 1.0).abs() < 1e-12);
        assert!((row.power - 10.0).abs() < 1e-12);
    }

    #[test]
    fn phase_filter() {
        let cfg = SystemConfig::at_10db(4, 2, 2, 2);
        let ch = generate_channels(&cfg, 1);
        let s = init_state_algorithm1(&cfg, &ch).unwrap();
        let mut rec = TraceRecorder::new("r", "a", 0, TraceLevel::Light).only_phases(&[Phase::Scale]);
        rec.observe(&StepEvent { iter: 1, phase: Phase::UStep, step: 1 }, &cfg, &ch, &s).unwrap();
        rec.observe(&StepEvent { iter: 1, phase: Phase::Scale, step: 1 }, &cfg, &ch, &s).unwrap();
        assert_eq!(rec.rows().len(), 1);
    }
}
