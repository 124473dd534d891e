//! Shared fixtures for the criterion benchmarks.

use beamsolve_core::system::init_state_algorithm1;
use beamsolve_core::{generate_channels, BeamformerState, ChannelSet, SystemConfig};

/// Scenarios timed by every benchmark group, as `(M, K, N, d)`.
pub const SCENARIOS: [(usize, usize, usize, usize); 3] = [(4, 2, 2, 2), (8, 4, 2, 2), (8, 2, 4, 4)];

pub struct Fixture {
    pub label: String,
    pub config: SystemConfig,
    pub channels: ChannelSet,
    /// Safe-solver starting point.
    pub state: BeamformerState,
}

pub fn fixture((m, k, n, d): (usize, usize, usize, usize), seed: u64) -> Fixture {
    let config = SystemConfig::at_10db(m, k, n, d);
    let channels = generate_channels(&config, seed);
    let state = init_state_algorithm1(&config, &channels).expect("fixture scenario is valid");
    Fixture { label: format!("M{m}K{k}N{n}d{d}"), config, channels, state }
}

pub fn fixtures() -> Vec<Fixture> {
    SCENARIOS.iter().map(|&s| fixture(s, 0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        for f in fixtures() {
            f.channels.check_shapes(&f.config).unwrap();
            f.state.check_shapes(&f.config).unwrap();
        }
    }
}
