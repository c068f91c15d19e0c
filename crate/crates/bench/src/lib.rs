//! Shared fixtures for the criterion benchmarks.

use fraczakai::sde_sim::simulate_classical_pair_covering;
use fraczakai::subordinator::sample_inverse_path;
use fraczakai::{InversePath, ModelSpec, ObservationRecord, SpatialGrid, TimeGrid};

/// A linear Gaussian model with its clock and operational observations.
pub struct Fixture {
    pub model: ModelSpec,
    pub grid: SpatialGrid,
    pub clock: InversePath,
    pub obs: ObservationRecord,
}

impl Fixture {
    pub fn new(beta: f64, horizon: f64, step: f64, spacing: f64) -> Self {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 1.0, beta).expect("model");
        let grid = SpatialGrid::with_spacing(-6.0, 6.0, spacing).expect("grid");
        let real = TimeGrid::covering(horizon, step).expect("time grid");
        let clock = sample_inverse_path(beta, &real, step, 7, 0).expect("clock");
        let (_, obs) = simulate_classical_pair_covering(&model, clock.max_value(), step, 7, 0).expect("pair");
        Self { model, grid, clock, obs }
    }
}
