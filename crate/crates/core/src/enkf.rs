//! Perturbed-observation ensemble Kalman filter on boundary depths.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{simulate, MeasurementVector, ToolSpec};
use crate::error::{Error, Result};
use crate::geomodel::{EarthRealization, Ensemble};
use crate::seeds;

/// Per-update diagnostic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssimilationRecord {
    pub station: (f64, f64),
    pub rms_before: f64,
    pub rms_after: f64,
    pub gain_frobenius: f64,
}

/// Outcome of [`analysis`]: updated states and the Kalman gain that produced them.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub state: DMatrix<f64>,
    pub gain: DMatrix<f64>,
}

fn anomalies(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols() as f64;
    let mut a = m.clone();
    for mut row in a.row_iter_mut() {
        // A collapsed row has no spread; rounding in the mean must not invent one.
        if row.iter().all(|&v| v == row[0]) {
            row.fill(0.0);
            continue;
        }
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
    }
    a
}

/// Kalman gain `C_yd (C_dd + R)^-1` from ensemble anomalies, `R = noise_variance * I`.
pub fn kalman_gain(state: &DMatrix<f64>, predicted: &DMatrix<f64>, noise_variance: f64) -> Result<DMatrix<f64>> {
    let n = state.ncols();
    if n < 2 {
        return Err(Error::arg("ensemble size must be at least 2"));
    }
    if predicted.ncols() != n {
        return Err(Error::arg("predicted data must have one column per member"));
    }
    let ya = anomalies(state);
    let da = anomalies(predicted);
    let denom = (n - 1) as f64;
    let c_yd = &ya * da.transpose() / denom;
    if c_yd.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(state.nrows(), predicted.nrows()));
    }
    let mut s = &da * da.transpose() / denom;
    for i in 0..s.nrows() {
        s[(i, i)] += noise_variance;
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    // K = C_yd S^-1  <=>  K^T = S^-1 C_yd^T for symmetric S.
    Ok(chol.solve(&c_yd.transpose()).transpose())
}

/// `Y + K (D_obs - D_pred)` column by column.
pub fn apply_gain(state: &DMatrix<f64>, gain: &DMatrix<f64>, innovations: &DMatrix<f64>) -> DMatrix<f64> {
    state + gain * innovations
}

/// Stochastic EnKF analysis step.
///
/// `state` holds one member per column, `predicted` the simulated data for
/// each member. Each member is compared against its own perturbed copy of
/// `observed`, with perturbations drawn from `N(0, noise_variance)`.
pub fn analysis<R: Rng>(
    state: &DMatrix<f64>,
    predicted: &DMatrix<f64>,
    observed: &[f64],
    noise_variance: f64,
    rng: &mut R,
) -> Result<Analysis> {
    if predicted.nrows() != observed.len() {
        return Err(Error::arg(format!(
            "observation has {} channels, predictions have {}",
            observed.len(),
            predicted.nrows()
        )));
    }
    let gain = kalman_gain(state, predicted, noise_variance)?;
    if gain.iter().all(|&v| v == 0.0) {
        return Ok(Analysis { state: state.clone(), gain });
    }
    let sd = noise_variance.sqrt();
    let mut innov = DMatrix::zeros(predicted.nrows(), predicted.ncols());
    for j in 0..predicted.ncols() {
        for c in 0..predicted.nrows() {
            let eps: f64 = rng.sample(StandardNormal);
            innov[(c, j)] = observed[c] + sd * eps - predicted[(c, j)];
        }
    }
    Ok(Analysis { state: apply_gain(state, &gain, &innov), gain })
}

fn predict(ensemble: &Ensemble, station: (f64, f64), tool: &ToolSpec) -> Result<DMatrix<f64>> {
    let sims: Vec<Vec<f64>> = ensemble
        .members
        .par_iter()
        .map(|m| simulate(m, station, tool).map(|v| v.values))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(tool.channels.len(), sims.len(), |c, j| sims[j][c]))
}

fn check_observation(observed: &MeasurementVector, tool: &ToolSpec) -> Result<()> {
    if observed.values.len() != tool.channels.len() {
        return Err(Error::arg("observation does not match the tool's channels"));
    }
    if observed.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("observation contains non-finite values"));
    }
    Ok(())
}

/// Updates the ensemble's boundary depths from one measurement station.
pub fn assimilate(
    ensemble: &Ensemble,
    station: (f64, f64),
    observed: &MeasurementVector,
    tool: &ToolSpec,
    seed: u64,
) -> Result<Ensemble> {
    assimilate_with_record(ensemble, station, observed, tool, seed).map(|(e, _)| e)
}

/// As [`assimilate`], also returning innovation and gain diagnostics.
pub fn assimilate_with_record(
    ensemble: &Ensemble,
    station: (f64, f64),
    observed: &MeasurementVector,
    tool: &ToolSpec,
    seed: u64,
) -> Result<(Ensemble, AssimilationRecord)> {
    ensemble.validate()?;
    if ensemble.len() < 2 {
        return Err(Error::arg("ensemble size must be at least 2"));
    }
    check_observation(observed, tool)?;
    let predicted = predict(ensemble, station, tool)?;
    let mut rng = seeds::rng(seed);
    let result = analysis(&ensemble.state_matrix(), &predicted, &observed.values, tool.noise_variance, &mut rng)?;
    let gain_frobenius = result.gain.norm();
    let updated = if gain_frobenius == 0.0 { ensemble.clone() } else { ensemble.with_state(&result.state)? };
    let rms_before = rms_mismatch(&predicted, &observed.values);
    let rms_after = if gain_frobenius == 0.0 {
        rms_before
    } else {
        rms_mismatch(&predict(&updated, station, tool)?, &observed.values)
    };
    Ok((updated, AssimilationRecord { station, rms_before, rms_after, gain_frobenius }))
}

fn rms_mismatch(predicted: &DMatrix<f64>, observed: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..predicted.ncols() {
        for (c, obs) in observed.iter().enumerate() {
            let r = obs - predicted[(c, j)];
            acc += r * r;
        }
    }
    (acc / predicted.len() as f64).sqrt()
}

/// Root-mean-square data mismatch over members and channels, before and after an update.
pub fn innovation_stats(
    before: &Ensemble,
    after: &Ensemble,
    station: (f64, f64),
    observed: &MeasurementVector,
    tool: &ToolSpec,
) -> Result<(f64, f64)> {
    check_observation(observed, tool)?;
    Ok((
        rms_mismatch(&predict(before, station, tool)?, &observed.values),
        rms_mismatch(&predict(after, station, tool)?, &observed.values),
    ))
}

/// Simulated data for every member at `station`, as `[member][channel]`.
pub fn ensemble_predictions(members: &[EarthRealization], station: (f64, f64), tool: &ToolSpec) -> Result<Vec<Vec<f64>>> {
    members
        .iter()
        .map(|m| simulate(m, station, tool).map(|v| v.values))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::observe;
    use crate::geomodel::{generate_ensemble, generate_truth, GeostatParams};

    #[test]
    fn zero_anomaly_leaves_ensemble_unchanged() {
        let p = GeostatParams::default();
        let ens = generate_ensemble(&p, 20, 1).unwrap();
        // 12 m above the top boundary every member reads pure shale.
        let station = (30.0, 12.0);
        let tool = ToolSpec::default();
        let obs = MeasurementVector { station, values: vec![10.3, 9.8] };
        let (after, rec) = assimilate_with_record(&ens, station, &obs, &tool, 5).unwrap();
        assert_eq!(after, ens);
        assert_eq!(rec.gain_frobenius, 0.0);
        assert_eq!(rec.rms_before, rec.rms_after);
    }

    #[test]
    fn forced_zero_gain_is_identity() {
        let y = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let k = DMatrix::zeros(3, 2);
        let innov = DMatrix::from_element(2, 4, 7.0);
        assert_eq!(apply_gain(&y, &k, &innov), y);
    }

    #[test]
    fn huge_noise_suppresses_update() {
        let p = GeostatParams::default();
        let ens = generate_ensemble(&p, 50, 2).unwrap();
        let truth = generate_truth(&p, 2).unwrap();
        let exact = ToolSpec { noise_variance: 0.0, ..Default::default() };
        for station in [(100.0, -1.0), (100.0, 3.0), (100.0, -9.0)] {
            let obs = observe(&truth, station, &exact, 0).unwrap();
            let tool = ToolSpec { noise_variance: 1e9, ..Default::default() };
            let (_, rec) = assimilate_with_record(&ens, station, &obs, &tool, 3).unwrap();
            assert!(rec.gain_frobenius < 1e-6, "gain {}", rec.gain_frobenius);
            // The perturbations grow like sqrt(R), so the update only vanishes like R^-1/2.
            let tool = ToolSpec { noise_variance: 1e12, ..Default::default() };
            let after = assimilate(&ens, station, &obs, &tool, 3).unwrap();
            let d = (after.state_matrix() - ens.state_matrix()).abs().max();
            assert!(d < 1e-3, "max update {d}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let ens = generate_ensemble(&GeostatParams::default(), 5, 2).unwrap();
        let obs = MeasurementVector { station: (0.0, 0.0), values: vec![1.0] };
        assert!(matches!(
            assimilate(&ens, (0.0, 0.0), &obs, &ToolSpec::default(), 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn assimilation_is_deterministic_and_propagates_ahead() {
        let p = GeostatParams::default();
        let ens = generate_ensemble(&p, 60, 4).unwrap();
        let truth = generate_truth(&p, 4).unwrap();
        let tool = ToolSpec::default();
        let station = (57.12, -1.5);
        let obs = observe(&truth, station, &tool, 9).unwrap();
        let a = assimilate(&ens, station, &obs, &tool, 10).unwrap();
        let b = assimilate(&ens, station, &obs, &tool, 10).unwrap();
        assert_eq!(a, b);
        // Some knot well ahead of the bit (x > 150 m) moved.
        let nk = ens.members[0].knots_x.len();
        let ahead: Vec<usize> = (0..nk).filter(|&k| ens.members[0].knots_x[k] > 150.0).collect();
        let moved = ens.members.iter().zip(&a.members).any(|(m0, m1)| {
            ahead.iter().any(|&k| (m0.boundary_depths[0][k] - m1.boundary_depths[0][k]).abs() > 1e-6)
        });
        assert!(moved);
    }

    #[test]
    fn innovation_stats_identity() {
        let p = GeostatParams::default();
        let ens = generate_ensemble(&p, 10, 4).unwrap();
        let tool = ToolSpec::default();
        let obs = MeasurementVector { station: (60.0, -1.0), values: vec![100.0, 120.0] };
        let (a, b) = innovation_stats(&ens, &ens, (60.0, -1.0), &obs, &tool).unwrap();
        assert_eq!(a, b);
    }
}
