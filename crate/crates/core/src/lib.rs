//! Weighted sum-rate beamforming for the multi-user MIMO downlink.
//!
//! Three solvers share one objective: a closed-form block coordinate descent
//! baseline ([`reference`]), an inverse-free solver with provably monotone
//! steps ([`safe`]) and the forward pass of an unfolded, accelerated variant
//! ([`unfolded`]). [`oracle`] holds the only eigen and inverse routines and is
//! kept off the inverse-free paths.

pub mod error;
pub mod linalg;
pub mod objective;
pub mod oracle;
pub mod reference;
pub mod safe;
pub mod sampling;
pub mod selftest;
pub mod system;
pub mod trace;
pub mod unfolded;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use objective::{CostBreakdown, RateReport};
pub use reference::{run_reference, ReferenceOutcome, ReferenceRunConfig};
pub use safe::{compute_step_bounds, run_algorithm1, SafeParams, StepBounds};
pub use system::{generate_channels, BeamformerState, ChannelSet, KappaMode, SystemConfig};
pub use trace::{IterationTrace, Observer, Phase, StepEvent, TraceLevel, TraceRecorder};
pub use unfolded::{run_algorithm2, UnfoldParams};
