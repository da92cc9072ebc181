use geodss_core::geomodel::{generate_ensemble, generate_truth, GeostatParams};

fn perturbations(params: &GeostatParams, n: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let ens = generate_ensemble(params, n, seed).unwrap();
    ens.members
        .iter()
        .map(|m| {
            m.boundary_depths
                .iter()
                .zip(&params.boundary_means)
                .map(|(row, mean)| row.iter().map(|d| d - mean).collect())
                .collect()
        })
        .collect()
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn per_knot_variance_matches_sill() {
    let p = GeostatParams::default();
    let d = perturbations(&p, 100, 17);
    let (nb, nk) = (d[0].len(), d[0][0].len());
    let mut inside = 0;
    for b in 0..nb {
        for k in 0..nk {
            let col: Vec<f64> = d.iter().map(|m| m[b][k]).collect();
            let v = variance(&col);
            inside += usize::from((1.5..=3.5).contains(&v));
        }
    }
    let share = inside as f64 / (nb * nk) as f64;
    assert!(share >= 0.95, "only {share} of knots within [1.5, 3.5]");
}

#[test]
fn adjacent_boundaries_correlate() {
    let p = GeostatParams::default();
    let d = perturbations(&p, 1000, 5);
    let nk = d[0][0].len();
    for b in 0..3 {
        for k in [0, nk / 2, nk - 1] {
            let a: Vec<f64> = d.iter().map(|m| m[b][k]).collect();
            let c: Vec<f64> = d.iter().map(|m| m[b + 1][k]).collect();
            let (ma, mc) = (a.iter().sum::<f64>() / 1000.0, c.iter().sum::<f64>() / 1000.0);
            let cov: f64 = a.iter().zip(&c).map(|(x, y)| (x - ma) * (y - mc)).sum::<f64>() / 999.0;
            let r = cov / (variance(&a) * variance(&c)).sqrt();
            assert!((0.6..=0.8).contains(&r), "boundaries {b}/{} knot {k}: r = {r}", b + 1);
        }
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn doubling_extent_keeps_marginals() {
    let p = GeostatParams::default();
    let wide = GeostatParams { x_extent: (-50.0, 890.0), ..p.clone() };
    let a = perturbations(&p, 1000, 21);
    let b = perturbations(&wide, 1000, 22);
    // 1% critical value for n = m = 1000.
    let crit = 1.628 * (2.0f64 / 1000.0).sqrt();
    for (bd, k) in [(0, 5), (3, 12)] {
        let xa: Vec<f64> = a.iter().map(|m| m[bd][k]).collect();
        let xb: Vec<f64> = b.iter().map(|m| m[bd][k]).collect();
        let d = ks(xa, xb);
        assert!(d < crit, "boundary {bd} knot {k}: D = {d} >= {crit}");
    }
}

#[test]
fn generated_models_never_cross() {
    let p = GeostatParams { sill: 9.0, ..Default::default() };
    let ens = generate_ensemble(&p, 200, 8).unwrap();
    for m in ens.members.iter().chain([&generate_truth(&p, 8).unwrap()]) {
        for k in 0..m.knots_x.len() {
            for b in 1..m.boundary_count() {
                assert!(m.boundary_depths[b - 1][k] - m.boundary_depths[b][k] >= 0.01 - 1e-12);
            }
        }
    }
}

#[test]
fn truth_stream_differs_from_ensemble_stream() {
    let p = GeostatParams::default();
    let t = generate_truth(&p, 3).unwrap();
    let e = generate_ensemble(&p, 2, 3).unwrap();
    assert_ne!(t, e.members[0]);
    assert_eq!(t, generate_truth(&p, 3).unwrap());
}
