//! Scripted single-case replays with per-step frame dumps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::{generate_truth, EarthRealization, GeostatParams, LayerKind};
use crate::objectives::ObjectiveWeights;
use crate::steering::{CaseMetrics, Decision, SessionConfig, SteeringSession, TruthSource};
use crate::view::StateView;

const FIXTURES: [(&str, &str); 3] = [
    ("top_thicker", include_str!("../fixtures/top_thicker.json")),
    ("bottom_thicker", include_str!("../fixtures/bottom_thicker.json")),
    ("reweight_midrun", include_str!("../fixtures/reweight_midrun.json")),
];

/// Truth drawn from the prior's covariance around preset boundary means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecipe {
    pub boundary_means: Vec<f64>,
    pub sill: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    EnterTopSand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reweight {
    pub weights: ObjectiveWeights,
    pub when: Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub truth: TruthRecipe,
    pub reweight: Option<Reweight>,
}

impl Preset {
    pub fn names() -> Vec<&'static str> {
        FIXTURES.iter().map(|(n, _)| *n).collect()
    }

    pub fn load(name: &str) -> Result<Self> {
        let (_, text) = FIXTURES
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::arg(format!("unknown preset {name:?}; known: {}", Self::names().join(", "))))?;
        Ok(serde_json::from_str(text)?)
    }

    /// The preset's truth under the prior's layer structure and correlation.
    pub fn truth_model(&self, prior: &GeostatParams) -> Result<EarthRealization> {
        let params = GeostatParams {
            boundary_means: self.truth.boundary_means.clone(),
            sill: self.truth.sill,
            ..prior.clone()
        };
        generate_truth(&params, self.truth.seed)
    }

    /// `base` with its truth replaced by this preset's.
    pub fn config(&self, base: &SessionConfig) -> Result<SessionConfig> {
        let model = self.truth_model(&base.geostat)?;
        Ok(SessionConfig { truth: TruthSource::Fixed { model }, ..base.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub view: StateView,
}

/// Expected-value CDF means on either side of a weight switch, at one bit position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub step: usize,
    pub cdf_mean_before: f64,
    pub cdf_mean_after: f64,
    pub expected_value_before: f64,
    pub expected_value_after: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub preset: String,
    pub metrics: CaseMetrics,
    pub switch: Option<SwitchReport>,
    pub drilled: Vec<(f64, f64)>,
    #[serde(skip)]
    pub frames: Vec<Frame>,
    #[serde(skip)]
    pub session: Option<Box<SteeringSession>>,
}

fn in_top_sand(session: &SteeringSession) -> Result<bool> {
    let truth = session.truth().ok_or_else(|| Error::State("scenario needs its truth".into()))?;
    let (x, z) = session.bit_position();
    Ok(matches!(truth.layer_query(x, z)?.kind, LayerKind::Sand { ordinal: 0 }))
}

/// Runs a preset with automatic decisions, capturing a frame per step.
pub fn run_scenario(preset: &Preset, base: &SessionConfig) -> Result<ScenarioReport> {
    let mut session = SteeringSession::create(preset.config(base)?)?;
    let mut frames = vec![Frame { step: 0, view: session.view()? }];
    let mut switch = None;
    while session.status() == crate::steering::Status::Drilling {
        session.step(Decision::Accept)?;
        if let (Some(rw), None) = (&preset.reweight, &switch) {
            let Trigger::EnterTopSand = rw.when;
            if in_top_sand(&session)? {
                let before = session.view()?;
                session.set_weights(rw.weights)?;
                let after = session.view()?;
                switch = Some(SwitchReport {
                    step: session.history().len(),
                    cdf_mean_before: before.value_cdf.mean,
                    cdf_mean_after: after.value_cdf.mean,
                    expected_value_before: before.recommendation.expected_value,
                    expected_value_after: after.recommendation.expected_value,
                });
                frames.push(Frame { step: session.history().len(), view: before });
            }
        }
        frames.push(Frame { step: session.history().len(), view: session.view()? });
    }
    Ok(ScenarioReport {
        preset: preset.name.clone(),
        metrics: session.evaluate()?,
        switch,
        drilled: session.drilled().to_vec(),
        frames,
        session: Some(Box::new(session)),
    })
}

impl ScenarioReport {
    /// Writes `report.json`, `snapshot.json`, `measurements.csv` and `frames/frame_NN.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let frames = dir.join("frames");
        fs::create_dir_all(&frames)?;
        fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        if let Some(s) = &self.session {
            fs::write(dir.join("snapshot.json"), serde_json::to_vec_pretty(&s.snapshot())?)?;
            s.write_measurement_csv(fs::File::create(dir.join("measurements.csv"))?)?;
        }
        for (i, f) in self.frames.iter().enumerate() {
            fs::write(frames.join(format!("frame_{i:02}.json")), serde_json::to_vec(f)?)?;
        }
        Ok(())
    }
}
