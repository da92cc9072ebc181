use geodss_core::em::{observe, ToolSpec};
use geodss_core::enkf::{analysis, assimilate, innovation_stats};
use geodss_core::geomodel::{generate_ensemble, generate_truth, GeostatParams};
use geodss_core::seeds;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Scalar state observed directly: the update must reproduce the Kalman posterior.
#[test]
fn scalar_update_matches_closed_form_posterior() {
    let n = 10_000;
    let (sigma2, r, d): (f64, f64, f64) = (2.5, 0.5, 1.7);
    let mut rng = seeds::rng(99);
    let prior = DMatrix::from_fn(1, n, |_, _| sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal));
    let out = analysis(&prior, &prior, &[d], r, &mut rng).unwrap();
    let post_mean = sigma2 / (sigma2 + r) * d;
    let post_var = sigma2 * r / (sigma2 + r);
    let mean = out.state.sum() / n as f64;
    let var = out.state.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (post_var / n as f64).sqrt();
    assert!((mean - post_mean).abs() < 3.0 * se, "mean {mean} vs {post_mean} (se {se})");
    assert!((var - post_var).abs() / post_var < 0.05, "variance {var} vs {post_var}");
}

#[test]
fn updates_reduce_mismatch_on_average() {
    let p = GeostatParams::default();
    let tool = ToolSpec::default();
    let (mut before, mut after) = (0.0, 0.0);
    for trial in 0..100u64 {
        let ens = generate_ensemble(&p, 30, 1000 + trial).unwrap();
        let truth = generate_truth(&p, 2000 + trial).unwrap();
        let station = (28.56 * (1 + trial % 10) as f64, -1.0 - (trial % 7) as f64);
        let obs = observe(&truth, station, &tool, trial).unwrap();
        let upd = assimilate(&ens, station, &obs, &tool, 3000 + trial).unwrap();
        let (b, a) = innovation_stats(&ens, &upd, station, &obs, &tool).unwrap();
        before += b;
        after += a;
    }
    assert!(after < before, "rms after {after} >= before {before}");
}
