//! Closed-loop steering: measure, assimilate, optimize, decide, drill.
//!
//! The truth model is used only to produce noisy measurements and to score a
//! finished case. Everything on the decision path reads the ensemble and the
//! measurement log, so a session can be replayed without its truth.

use serde::{Deserialize, Serialize};

use crate::em::{observe, write_measurement_csv, MeasurementVector, ToolSpec};
use crate::enkf::{assimilate_with_record, AssimilationRecord};
use crate::error::{Error, Result};
use crate::geomodel::{generate_ensemble, generate_truth, EarthRealization, Ensemble, GeostatParams, LayerKind, STAND_LENGTH};
use crate::objectives::{inclination, Constraints, ObjectiveWeights, Segment, ValueFunction};
use crate::optimizer::{optimal_plan, robust_decision, Action, BitState, DecisionGrid, GridSpec, Recommendation};
use crate::seeds::{mix, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSeeds {
    pub ensemble: u64,
    pub truth: u64,
    pub noise: u64,
}

impl SessionSeeds {
    /// The three seeds of case `index` under a master seed.
    pub fn for_case(master: u64, index: u64) -> Self {
        let case = mix(master, index);
        Self { ensemble: mix(case, stream::ENSEMBLE), truth: mix(case, stream::TRUTH), noise: mix(case, stream::OBSERVATION) }
    }
}

impl Default for SessionSeeds {
    fn default() -> Self {
        Self::for_case(0, 0)
    }
}

/// Where the hidden truth comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSource {
    /// Drawn from the prior with the truth seed.
    #[default]
    Sampled,
    Fixed { model: EarthRealization },
}

/// Where the decision ensemble comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSource {
    #[default]
    Prior,
    /// Every member is a copy of the truth (perfect information).
    TruthCopies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub geostat: GeostatParams,
    pub tool: ToolSpec,
    pub weights: ObjectiveWeights,
    pub constraints: Constraints,
    pub gamma: f64,
    pub ensemble_size: usize,
    pub horizontal_length: f64,
    /// Height of the bit above the expected top of the first boundary.
    pub start_height: f64,
    pub start_inclination: f64,
    pub seeds: SessionSeeds,
    /// Deepest node of the decision grid.
    pub z_min: f64,
    pub dz: f64,
    pub assimilate: bool,
    pub truth: TruthSource,
    pub ensemble_source: EnsembleSource,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            geostat: GeostatParams::default(),
            tool: ToolSpec::default(),
            weights: ObjectiveWeights::primary(),
            constraints: Constraints::default(),
            gamma: 1.0,
            ensemble_size: 100,
            horizontal_length: 350.0,
            start_height: 15.0,
            start_inclination: 80.0,
            seeds: SessionSeeds::default(),
            z_min: -30.0,
            dz: 0.25,
            assimilate: true,
            truth: TruthSource::Sampled,
            ensemble_source: EnsembleSource::Prior,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.geostat.validate()?;
        self.tool.validate()?;
        self.weights.validate()?;
        self.constraints.validate()?;
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::arg("gamma must lie in [0, 1]"));
        }
        if self.ensemble_source == EnsembleSource::Prior && self.ensemble_size < 2 {
            return Err(Error::arg("ensemble size must be at least 2"));
        }
        if self.ensemble_size == 0 {
            return Err(Error::arg("ensemble size must be positive"));
        }
        if !(self.horizontal_length > 0.0 && self.horizontal_length.is_finite()) {
            return Err(Error::arg("horizontal_length must be positive"));
        }
        if !(self.start_inclination > 0.0 && self.start_inclination <= 90.0) {
            return Err(Error::arg("start_inclination must lie in (0, 90]"));
        }
        if !(self.dz > 0.0 && self.start_height.is_finite() && self.z_min.is_finite()) {
            return Err(Error::arg("invalid depth grid"));
        }
        if let TruthSource::Fixed { model } = &self.truth {
            model.validate()?;
            if model.boundary_count() != self.geostat.boundary_means.len() {
                return Err(Error::arg("fixed truth must have as many boundaries as the prior"));
            }
        }
        Ok(())
    }

    pub fn start_z(&self) -> f64 {
        self.geostat.boundary_means[0] + self.start_height
    }

    /// Decision grid: one node per stand, depths from `z_min` to just above the start.
    pub fn grid_spec(&self) -> GridSpec {
        let steps = (self.horizontal_length / STAND_LENGTH - 1e-9).ceil() as usize;
        let z_max = self.start_z() + (1.0 / self.dz).ceil() * self.dz;
        GridSpec { x0: 0.0, dx: STAND_LENGTH, steps, z_min: self.z_min, z_max, dz: self.dz }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Drilling,
    Stopped,
    Completed,
}

/// Operator input at a decision point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Steer { z: f64 },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecidedBy {
    Auto,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub decided_by: DecidedBy,
    /// Action that was recommended when the decision was taken.
    pub recommended: Action,
    pub action: Action,
    pub weights: ObjectiveWeights,
    pub bit: BitState,
    pub measurement: Option<MeasurementVector>,
    pub assimilation: Option<AssimilationRecord>,
}

/// Which sand a well landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Landing {
    Top,
    Bottom,
    None,
}

impl Landing {
    fn of_ordinal(ordinal: usize) -> Self {
        if ordinal == 0 {
            Landing::Top
        } else {
            Landing::Bottom
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Landing::Top => "top",
            Landing::Bottom => "bottom",
            Landing::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub achieved_value: f64,
    pub theoretical_max: f64,
    /// Percent of the theoretical maximum; `None` when the maximum is zero.
    pub relative: Option<f64>,
    pub landed_layer: Landing,
    pub optimal_layer: Landing,
    pub landing_optimal: bool,
    pub stands_in_target: usize,
}

impl CaseMetrics {
    pub fn is_defined(&self) -> bool {
        self.relative.is_some()
    }
}

/// Configuration and decision log; enough to rebuild a session without its truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub config: SessionConfig,
    pub history: Vec<StepRecord>,
    /// Weights in force when the snapshot was taken.
    #[serde(default)]
    pub weights: Option<ObjectiveWeights>,
    #[serde(default)]
    pub version: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SteeringSession {
    config: SessionConfig,
    truth: Option<EarthRealization>,
    ensemble: Ensemble,
    grid: DecisionGrid,
    bit: BitState,
    drilled: Vec<(f64, f64)>,
    status: Status,
    weights: ObjectiveWeights,
    recommendation: Recommendation,
    history: Vec<StepRecord>,
    version: u64,
}

impl SteeringSession {
    pub fn create(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let truth = match &config.truth {
            TruthSource::Sampled => generate_truth(&config.geostat, config.seeds.truth)?,
            TruthSource::Fixed { model } => model.clone(),
        };
        Self::build(config, Some(truth))
    }

    fn build(config: SessionConfig, truth: Option<EarthRealization>) -> Result<Self> {
        config.validate()?;
        let grid = DecisionGrid::new(config.grid_spec(), config.constraints)?;
        let ensemble = match config.ensemble_source {
            EnsembleSource::Prior => generate_ensemble(&config.geostat, config.ensemble_size, config.seeds.ensemble)?,
            EnsembleSource::TruthCopies => {
                let t = truth.as_ref().ok_or_else(|| Error::State("a truth-copy ensemble needs the truth".into()))?;
                Ensemble::uniform(vec![t.clone(); config.ensemble_size])?
            }
        };
        let z_index = grid
            .z_index(config.start_z())
            .ok_or_else(|| Error::arg("start depth is not on the decision grid"))?;
        let bit = BitState { k: 0, z_index, inclination: config.start_inclination };
        let weights = config.weights;
        let recommendation = robust_decision(&grid, &ensemble, &ValueFunction::new(weights), config.gamma, bit)?;
        Ok(Self {
            drilled: vec![(grid.x_nodes[0], grid.z_nodes[z_index])],
            config,
            truth,
            ensemble,
            grid,
            bit,
            status: Status::Drilling,
            weights,
            recommendation,
            history: Vec::new(),
            version: 1,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn grid(&self) -> &DecisionGrid {
        &self.grid
    }

    pub fn bit(&self) -> BitState {
        self.bit
    }

    pub fn bit_position(&self) -> (f64, f64) {
        (self.grid.x_nodes[self.bit.k], self.grid.z_nodes[self.bit.z_index])
    }

    pub fn drilled(&self) -> &[(f64, f64)] {
        &self.drilled
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn weights(&self) -> ObjectiveWeights {
        self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    pub fn recommendation(&self) -> &Recommendation {
        &self.recommendation
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn truth(&self) -> Option<&EarthRealization> {
        self.truth.as_ref()
    }

    pub fn value_function(&self) -> ValueFunction {
        ValueFunction::new(self.weights)
    }

    pub fn measurements(&self) -> impl Iterator<Item = &MeasurementVector> {
        self.history.iter().filter_map(|r| r.measurement.as_ref())
    }

    fn recompute(&mut self) -> Result<()> {
        self.recommendation =
            robust_decision(&self.grid, &self.ensemble, &self.value_function(), self.config.gamma, self.bit)?;
        Ok(())
    }

    /// Replaces the objective weights and recomputes the recommendation in place.
    pub fn set_weights(&mut self, weights: ObjectiveWeights) -> Result<()> {
        weights.validate()?;
        let previous = self.weights;
        self.weights = weights;
        if let Err(e) = self.recompute() {
            self.weights = previous;
            return Err(e);
        }
        self.version += 1;
        Ok(())
    }

    /// Resolves a decision to a concrete action, checking overrides against the constraints.
    pub fn resolve(&self, decision: Decision) -> Result<Action> {
        if self.status != Status::Drilling {
            return Err(Error::State(format!("session is {:?}", self.status).to_lowercase()));
        }
        match decision {
            Decision::Accept => Ok(self.recommendation.action),
            Decision::Stop => Ok(Action::Stop),
            Decision::Steer { z } => {
                let g = &self.grid;
                let target = g.z_index(z).ok_or_else(|| Error::Constraint {
                    constraint: "grid",
                    detail: format!("target depth {z} is not a node of the depth grid"),
                })?;
                let seg = Segment::new(self.bit_position(), (g.x_nodes[self.bit.k + 1], g.z_nodes[target]));
                let incl = inclination(&seg).map_err(|_| Error::Constraint {
                    constraint: "inclination",
                    detail: format!("target depth {z} would climb above horizontal"),
                })?;
                if !g.feasible_targets(self.bit.z_index, self.bit.inclination).contains(&target) {
                    let constraint = if incl > g.constraints.max_inclination { "inclination" } else { "dogleg" };
                    return Err(Error::Constraint {
                        constraint,
                        detail: format!(
                            "inclination {incl:.3} deg from {:.3} deg exceeds the {} limit",
                            self.bit.inclination, constraint
                        ),
                    });
                }
                Ok(Action::Steer { target_z: g.z_nodes[target], target_index: target, inclination_deg: g.drop_inclination(target - self.bit.z_index) })
            }
        }
    }

    /// Takes one decision: drills a stand (or stops), measures at the new bit
    /// position against the truth, assimilates and re-optimizes.
    pub fn step(&mut self, decision: Decision) -> Result<&StepRecord> {
        let action = self.resolve(decision)?;
        let measurement = match action {
            Action::Stop => None,
            Action::Steer { target_index, .. } => {
                let truth = self.truth.as_ref().ok_or_else(|| Error::State("session has no truth to measure".into()))?;
                let station = (self.grid.x_nodes[self.bit.k + 1], self.grid.z_nodes[target_index]);
                let seed = mix(self.config.seeds.noise, self.history.len() as u64);
                Some(observe(truth, station, &self.config.tool, seed)?)
            }
        };
        let by = if decision == Decision::Accept { DecidedBy::Auto } else { DecidedBy::Human };
        self.apply(action, by, measurement)
    }

    /// As [`step`](Self::step) with a measurement supplied by the caller; the truth is not read.
    pub fn step_with_measurement(
        &mut self,
        decision: Decision,
        measurement: Option<MeasurementVector>,
    ) -> Result<&StepRecord> {
        let action = self.resolve(decision)?;
        let by = if decision == Decision::Accept { DecidedBy::Auto } else { DecidedBy::Human };
        self.apply(action, by, measurement)
    }

    fn apply(&mut self, action: Action, decided_by: DecidedBy, measurement: Option<MeasurementVector>) -> Result<&StepRecord> {
        let step = self.history.len();
        let recommended = self.recommendation.action;
        let mut next = self.clone();
        let mut assimilation = None;
        match action {
            Action::Stop => next.status = Status::Stopped,
            Action::Steer { target_index, inclination_deg, .. } => {
                next.bit = BitState { k: self.bit.k + 1, z_index: target_index, inclination: inclination_deg };
                next.drilled.push(next.bit_position());
                if let Some(m) = &measurement {
                    if m.station != next.bit_position() {
                        return Err(Error::arg("measurement station does not match the new bit position"));
                    }
                    if self.config.assimilate {
                        let seed = mix(mix(self.config.seeds.ensemble, stream::ENKF), step as u64);
                        let (ens, rec) = assimilate_with_record(&next.ensemble, m.station, m, &self.config.tool, seed)?;
                        next.ensemble = ens;
                        assimilation = Some(rec);
                    }
                }
                if next.bit.k == self.grid.steps() {
                    next.status = Status::Completed;
                }
            }
        }
        next.recompute()?;
        next.history.push(StepRecord {
            step,
            decided_by,
            recommended,
            action,
            weights: self.weights,
            bit: next.bit,
            measurement,
            assimilation,
        });
        next.version += 1;
        *self = next;
        Ok(self.history.last().expect("record just pushed"))
    }

    /// Runs automatic decisions until the session stops or completes.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.status == Status::Drilling {
            self.step(Decision::Accept)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            config: self.config.clone(),
            history: self.history.clone(),
            weights: Some(self.weights),
            version: Some(self.version),
        }
    }

    /// Rebuilds a session from its configuration and recorded measurements
    /// without constructing the truth. Recommendations are recomputed and must
    /// match the recorded ones.
    pub fn replay(snapshot: &SessionSnapshot) -> Result<Self> {
        let truth = match (&snapshot.config.ensemble_source, &snapshot.config.truth) {
            (EnsembleSource::TruthCopies, TruthSource::Fixed { model }) => Some(model.clone()),
            (EnsembleSource::TruthCopies, TruthSource::Sampled) => {
                Some(generate_truth(&snapshot.config.geostat, snapshot.config.seeds.truth)?)
            }
            (EnsembleSource::Prior, _) => None,
        };
        let mut s = Self::build(snapshot.config.clone(), truth)?;
        s.truth = None;
        for rec in &snapshot.history {
            if rec.weights != s.weights {
                s.set_weights(rec.weights)?;
            }
            if s.recommendation.action != rec.recommended {
                return Err(Error::State(format!("replay diverged at step {}", rec.step)));
            }
            let decision = match (rec.decided_by, rec.action) {
                (DecidedBy::Auto, _) => Decision::Accept,
                (DecidedBy::Human, Action::Stop) => Decision::Stop,
                (DecidedBy::Human, Action::Steer { target_z, .. }) => Decision::Steer { z: target_z },
            };
            s.step_with_measurement(decision, rec.measurement.clone())?;
        }
        if let Some(w) = snapshot.weights.filter(|w| *w != s.weights) {
            s.set_weights(w)?;
        }
        Ok(s)
    }

    /// [`replay`](Self::replay), then reattaches the configured truth so the session can keep drilling.
    pub fn restore(snapshot: &SessionSnapshot) -> Result<Self> {
        let mut s = Self::replay(snapshot)?;
        s.truth = Some(match &s.config.truth {
            TruthSource::Sampled => generate_truth(&s.config.geostat, s.config.seeds.truth)?,
            TruthSource::Fixed { model } => model.clone(),
        });
        s.version = snapshot.version.unwrap_or(s.version);
        Ok(s)
    }

    pub fn write_measurement_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let log: Vec<MeasurementVector> = self.measurements().cloned().collect();
        write_measurement_csv(out, &self.config.tool, &log)
    }

    /// Scores a finished session against its truth.
    pub fn evaluate(&self) -> Result<CaseMetrics> {
        if self.status == Status::Drilling {
            return Err(Error::State("session is still drilling".into()));
        }
        let truth = self.truth.as_ref().ok_or_else(|| Error::State("session has no truth".into()))?;
        let vf = self.value_function();
        let root = BitState { k: 0, z_index: self.drilled_root_index(), inclination: self.config.start_inclination };
        let (theoretical_max, optimal) = optimal_plan(&self.grid, truth, &vf, root)?;
        let achieved_value = path_value(&self.drilled, truth, &vf)?;
        let relative = (theoretical_max > 0.0).then(|| achieved_value / theoretical_max * 100.0);
        let drilled_layers = stand_layers(&self.drilled, truth)?;
        let landed_layer = landing(&drilled_layers);
        let optimal_layer = landing(&stand_layers(&optimal, truth)?);
        let stands_in_target = match optimal_layer {
            Landing::None => 0,
            target => drilled_layers.iter().filter(|l| **l == target).count(),
        };
        Ok(CaseMetrics {
            achieved_value,
            theoretical_max,
            relative,
            landed_layer,
            optimal_layer,
            landing_optimal: landed_layer == optimal_layer,
            stands_in_target,
        })
    }

    fn drilled_root_index(&self) -> usize {
        self.grid.z_index(self.drilled[0].1).expect("drilled path starts on the grid")
    }
}

/// Undiscounted value of a polyline, accumulated from the last segment backwards
/// (the order in which the dynamic program accumulates it).
pub fn path_value(points: &[(f64, f64)], model: &EarthRealization, vf: &ValueFunction) -> Result<f64> {
    let mut total = 0.0;
    for w in points.windows(2).rev() {
        total += vf.segment_value(&Segment::new(w[0], w[1]), model)?;
    }
    Ok(total)
}

/// Sand holding each stand entirely: its midpoint and both ends in the same sand.
fn stand_layers(points: &[(f64, f64)], truth: &EarthRealization) -> Result<Vec<Landing>> {
    let sand = |(x, z): (f64, f64)| -> Result<Option<usize>> {
        Ok(match truth.layer_query(x, z)?.kind {
            LayerKind::Sand { ordinal } => Some(ordinal),
            LayerKind::Shale => None,
        })
    };
    points
        .windows(2)
        .map(|w| {
            let mid = sand((0.5 * (w[0].0 + w[1].0), 0.5 * (w[0].1 + w[1].1)))?;
            let full = mid.is_some() && sand(w[0])? == mid && sand(w[1])? == mid;
            Ok(match mid {
                Some(o) if full => Landing::of_ordinal(o),
                _ => Landing::None,
            })
        })
        .collect()
}

/// First sand holding at least two consecutive stands.
fn landing(layers: &[Landing]) -> Landing {
    layers
        .windows(2)
        .find(|w| w[0] != Landing::None && w[0] == w[1])
        .map_or(Landing::None, |w| w[0])
}
