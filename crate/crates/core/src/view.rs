//! Display data for a session: what an interactive client renders.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geomodel::{layer_index, Ensemble};
use crate::objectives::ObjectiveWeights;
use crate::optimizer::{Action, AlternativeValue, DecisionGrid, RealizationOutlook};
use crate::steering::{path_value, Status, SteeringSession};

/// Default raster cell size, (x, z) in metres.
pub const POINTCLOUD_CELL: (f64, f64) = (2.0, 0.25);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitView {
    pub x: f64,
    pub z: f64,
    pub inclination: f64,
}

/// The recommendation without per-realization detail, which lives on the view itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    #[serde(flatten)]
    pub action: Action,
    pub expected_value: f64,
    pub alternatives: Vec<AlternativeValue>,
}

/// Sorted per-member predicted well values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCdf {
    pub values: Vec<f64>,
    /// Probability-weighted mean; not snapped to any member.
    pub mean: f64,
    /// Weighted mean of the already-drilled part's value across members.
    pub drilled_mean: f64,
}

/// Ensemble-mean resistivity on a regular raster, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub nx: usize,
    pub nz: usize,
    /// Upper-left corner (x, z) of the raster.
    pub origin: (f64, f64),
    pub spacing: (f64, f64),
    /// Row-major, `values[row * nx + col]`.
    pub values: Vec<f64>,
}

impl PointCloud {
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (self.origin.0 + (col as f64 + 0.5) * self.spacing.0, self.origin.1 - (row as f64 + 0.5) * self.spacing.1)
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.nx + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub version: u64,
    pub status: Status,
    pub bit: BitView,
    pub drilled: Vec<(f64, f64)>,
    pub recommendation: RecommendationView,
    pub weights: ObjectiveWeights,
    pub gamma: f64,
    pub per_realization: Vec<RealizationOutlook>,
    pub value_cdf: ValueCdf,
    pub pointcloud: PointCloud,
    pub realization_count: usize,
}

/// Ensemble-weighted mean resistivity at cell centres covering the decision grid.
pub fn pointcloud(ensemble: &Ensemble, grid: &DecisionGrid, cell: (f64, f64)) -> PointCloud {
    let x0 = grid.x_nodes[0];
    let x1 = *grid.x_nodes.last().expect("grid has nodes");
    let z_top = grid.z_nodes[0];
    let z_bottom = *grid.z_nodes.last().expect("grid has nodes");
    let nx = ((x1 - x0) / cell.0 - 1e-9).ceil().max(1.0) as usize;
    let nz = ((z_top - z_bottom) / cell.1 - 1e-9).ceil().max(1.0) as usize;
    let mut out = PointCloud { nx, nz, origin: (x0, z_top), spacing: cell, values: vec![0.0; nx * nz] };
    let total: f64 = ensemble.weights.iter().sum();
    let mut depths = Vec::new();
    for col in 0..nx {
        let x = out.cell_center(0, col).0;
        for (m, w) in ensemble.members.iter().zip(&ensemble.weights) {
            depths.resize(m.boundary_count(), 0.0);
            m.boundaries_at_into(x.min(m.extent().1), &mut depths);
            let p = w / total;
            for row in 0..nz {
                let z = out.cell_center(row, 0).1;
                out.values[row * nx + col] += p * m.layer_resistivities[layer_index(&depths, z)];
            }
        }
    }
    out
}

impl SteeringSession {
    /// Renders the current state. Every value comes from the ensemble, never the truth.
    pub fn view(&self) -> Result<StateView> {
        let rec = self.recommendation();
        let ens = self.ensemble();
        let vf = self.value_function();
        let total: f64 = ens.weights.iter().sum();
        let mut values = Vec::with_capacity(ens.len());
        let (mut mean, mut drilled_mean) = (0.0, 0.0);
        for ((m, w), outlook) in ens.members.iter().zip(&ens.weights).zip(&rec.per_realization) {
            let drilled = path_value(self.drilled(), m, &vf)?;
            let p = w / total;
            mean += p * (drilled + outlook.predicted_value);
            drilled_mean += p * drilled;
            values.push(drilled + outlook.predicted_value);
        }
        values.sort_by(f64::total_cmp);
        let (x, z) = self.bit_position();
        Ok(StateView {
            version: self.version(),
            status: self.status(),
            bit: BitView { x, z, inclination: self.bit().inclination },
            drilled: self.drilled().to_vec(),
            recommendation: RecommendationView {
                action: rec.action,
                expected_value: rec.expected_value,
                alternatives: rec.alternatives.clone(),
            },
            weights: self.weights(),
            gamma: self.gamma(),
            per_realization: rec.per_realization.clone(),
            value_cdf: ValueCdf { values, mean, drilled_mean },
            pointcloud: pointcloud(ens, self.grid(), POINTCLOUD_CELL),
            realization_count: ens.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomodel::{generate_ensemble, GeostatParams};
    use crate::steering::SessionConfig;

    #[test]
    fn pointcloud_is_member_average() {
        let ens = generate_ensemble(&GeostatParams::default(), 7, 3).unwrap();
        let grid = DecisionGrid::default_grid();
        let pc = pointcloud(&ens, &grid, POINTCLOUD_CELL);
        assert_eq!((pc.nx, pc.nz), (186, 184));
        for (row, col) in [(0, 0), (60, 10), (70, 100), (120, 185), (183, 50)] {
            let (x, z) = pc.cell_center(row, col);
            let avg: f64 = ens.members.iter().map(|m| m.resistivity_at(x, z).unwrap()).sum::<f64>() / 7.0;
            assert!((pc.at(row, col) - avg).abs() < 1e-9);
        }
        // Above every member's top boundary only shale is seen.
        assert!((pc.at(0, 0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn fresh_view_cdf_mean_is_expected_value() {
        let s = SteeringSession::create(SessionConfig { ensemble_size: 6, ..Default::default() }).unwrap();
        let v = s.view().unwrap();
        assert_eq!(v.version, 1);
        assert_eq!(v.value_cdf.values.len(), v.realization_count);
        assert!(v.value_cdf.values.windows(2).all(|w| w[0] <= w[1]));
        assert!((v.value_cdf.mean - v.recommendation.expected_value).abs() < 1e-9);
        let json = serde_json::to_value(&v).unwrap();
        for key in ["version", "bit", "drilled", "recommendation", "weights", "per_realization", "value_cdf", "pointcloud", "realization_count"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(json["recommendation"]["action"].is_string());
    }
}
