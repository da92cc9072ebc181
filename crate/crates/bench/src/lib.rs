//! Shared fixtures for the criterion benchmarks.

use geodss_core::em::{observe, MeasurementVector};
use geodss_core::geomodel::{generate_ensemble, generate_truth};
use geodss_core::steering::SessionConfig;
use geodss_core::{BitState, DecisionGrid, EarthRealization, Ensemble, ValueFunction};

/// A fresh default-sized decision problem at the start of a lateral.
pub struct Fixture {
    pub config: SessionConfig,
    pub grid: DecisionGrid,
    pub ensemble: Ensemble,
    pub truth: EarthRealization,
    pub bit: BitState,
    pub value_fn: ValueFunction,
    pub station: (f64, f64),
    pub observation: MeasurementVector,
}

impl Fixture {
    pub fn new(members: usize) -> Self {
        let config = SessionConfig { ensemble_size: members, ..Default::default() };
        let grid = DecisionGrid::new(config.grid_spec(), config.constraints).expect("default grid");
        let ensemble = generate_ensemble(&config.geostat, members, config.seeds.ensemble).expect("ensemble");
        let truth = generate_truth(&config.geostat, config.seeds.truth).expect("truth");
        let z_index = grid.z_index(config.start_z()).expect("start on grid");
        let bit = BitState { k: 0, z_index, inclination: config.start_inclination };
        let station = (grid.x_nodes[1], config.start_z() - 5.0);
        let observation = observe(&truth, station, &config.tool, 1).expect("observation");
        let value_fn = ValueFunction::new(config.weights);
        Self { config, grid, ensemble, truth, bit, value_fn, station, observation }
    }
}
