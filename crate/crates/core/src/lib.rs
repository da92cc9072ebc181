//! Closed-loop geosteering decision support.
//!
//! An ensemble of layer-cake earth models is conditioned on look-around
//! resistivity measurements while drilling, and a two-step dynamic program
//! recommends the next stand's target depth.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod em;
pub mod enkf;
pub mod error;
pub mod geomodel;
pub mod harness;
pub mod objectives;
pub mod optimizer;
pub mod scenario;
pub mod seeds;
pub mod steering;
pub mod view;

pub use em::{MeasurementVector, ToolSpec};
pub use error::{Error, Result};
pub use geomodel::{EarthRealization, Ensemble, GeostatParams, LayerInfo, LayerKind};
pub use objectives::{Constraints, ObjectiveWeights, Segment, ValueFunction};
pub use optimizer::{Action, BitState, DPState, DecisionGrid, GridSpec, PolicyTable, Recommendation};
pub use steering::{CaseMetrics, Decision, Landing, SessionConfig, SessionSeeds, Status, SteeringSession};
pub use view::StateView;
pub use harness::{run_bench, BenchResult};
pub use scenario::{run_scenario, Preset, ScenarioReport};
