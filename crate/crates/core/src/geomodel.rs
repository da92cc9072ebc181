//! Layer-cake earth models and their geostatistical prior.
//!
//! A realization stores the depth of every layer boundary at a shared set of
//! knots along the lateral; depths between knots are linearly interpolated.
//! Depth `z` is positive upward and boundaries are ordered top-down, so the
//! depths at any knot are strictly decreasing with the boundary index.
//!
//! Layers are numbered from the top: layer 0 lies above boundary 0 and layer
//! `b + 1` lies between boundaries `b` and `b + 1`. Shales and sands
//! interleave starting with shale, so odd layers are sands.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Minimum layer thickness enforced after sampling and assimilation.
pub const MIN_THICKNESS: f64 = 0.01;

/// Distance between decision points, also the default knot spacing.
pub const STAND_LENGTH: f64 = 28.56;

/// Parameters of the Gaussian boundary-depth prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeostatParams {
    pub boundary_means: Vec<f64>,
    pub sill: f64,
    pub range: f64,
    pub nugget: f64,
    pub adjacent_correlation: f64,
    pub knot_spacing: f64,
    pub x_extent: (f64, f64),
    pub layer_resistivities: Vec<f64>,
}

impl Default for GeostatParams {
    fn default() -> Self {
        Self {
            boundary_means: vec![0.0, -5.3, -13.3, -20.1],
            sill: 2.5,
            range: 350.0,
            nugget: 0.0,
            adjacent_correlation: 0.7,
            knot_spacing: STAND_LENGTH,
            x_extent: (-50.0, 420.0),
            layer_resistivities: vec![10.0, 150.0, 10.0, 250.0, 10.0],
        }
    }
}

impl GeostatParams {
    pub fn validate(&self) -> Result<()> {
        if self.boundary_means.is_empty() {
            return Err(Error::arg("at least one boundary is required"));
        }
        if self.boundary_means.iter().any(|v| !v.is_finite())
            || self.boundary_means.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::arg("boundary_means must be finite and strictly decreasing"));
        }
        if !(self.sill >= 0.0) || !(self.nugget >= 0.0) {
            return Err(Error::arg("sill and nugget must be non-negative"));
        }
        if !(self.range > 0.0) {
            return Err(Error::arg("range must be positive"));
        }
        if !(0.0..=1.0).contains(&self.adjacent_correlation) {
            return Err(Error::arg("adjacent_correlation must lie in [0, 1]"));
        }
        if !(self.knot_spacing > 0.0) {
            return Err(Error::arg("knot_spacing must be positive"));
        }
        let (x0, x1) = self.x_extent;
        if !(x0.is_finite() && x1.is_finite() && x1 > x0) {
            return Err(Error::arg("x_extent must be a finite, non-empty interval"));
        }
        if !self.boundary_means.len().is_multiple_of(2) {
            return Err(Error::arg("boundaries must come in pairs so every sand is bounded"));
        }
        if self.layer_resistivities.len() != self.boundary_means.len() + 1 {
            return Err(Error::arg(format!(
                "expected {} layer resistivities, got {}",
                self.boundary_means.len() + 1,
                self.layer_resistivities.len()
            )));
        }
        if self.layer_resistivities.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::arg("layer resistivities must be positive"));
        }
        Ok(())
    }

    /// Knot abscissas: `x_extent.0 + i * knot_spacing` until the extent is covered.
    pub fn knots(&self) -> Vec<f64> {
        let (x0, x1) = self.x_extent;
        let intervals = ((x1 - x0) / self.knot_spacing - 1e-9).ceil().max(1.0) as usize;
        (0..=intervals).map(|i| x0 + i as f64 * self.knot_spacing).collect()
    }

    /// Prior covariance of the stacked state vector (boundary-major ordering).
    ///
    /// Along the lateral the covariance is exponential with the effective-range
    /// convention `sill * exp(-3h / range)`; across boundaries the correlation is
    /// `adjacent_correlation^|b - b'|`. The two factors combine as a Kronecker
    /// product.
    pub fn covariance(&self) -> DMatrix<f64> {
        let knots = self.knots();
        let nk = knots.len();
        let nb = self.boundary_means.len();
        let lateral = DMatrix::from_fn(nk, nk, |i, j| {
            let h = (knots[i] - knots[j]).abs();
            let nugget = if i == j { self.nugget } else { 0.0 };
            self.sill * (-3.0 * h / self.range).exp() + nugget
        });
        let vertical = DMatrix::from_fn(nb, nb, |a, b| {
            self.adjacent_correlation.powi((a as i32 - b as i32).abs())
        });
        vertical.kronecker(&lateral)
    }

    pub fn mean_model(&self) -> EarthRealization {
        let knots = self.knots();
        EarthRealization {
            boundary_depths: self
                .boundary_means
                .iter()
                .map(|&m| vec![m; knots.len()])
                .collect(),
            knots_x: knots,
            layer_resistivities: self.layer_resistivities.clone(),
        }
    }
}

/// What kind of rock a layer is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Shale,
    /// Reservoir sand; `ordinal` counts sands from the top (0 = top sand).
    Sand { ordinal: usize },
}

impl LayerKind {
    pub fn of_layer(layer: usize) -> Self {
        if layer % 2 == 1 {
            LayerKind::Sand { ordinal: layer / 2 }
        } else {
            LayerKind::Shale
        }
    }

    pub fn is_reservoir(self) -> bool {
        matches!(self, LayerKind::Sand { .. })
    }
}

/// Result of [`EarthRealization::layer_query`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerInfo {
    pub layer: usize,
    pub kind: LayerKind,
    /// Thickness of the containing layer at `x` (infinite for the outer layers).
    pub thickness: f64,
    /// Distance from the layer's roof down to the queried point (infinite in the top layer).
    pub depth_below_roof: f64,
}

impl LayerInfo {
    pub fn in_reservoir(&self) -> bool {
        self.kind.is_reservoir()
    }
}

/// Index of the layer containing `z` given the boundary depths at some `x`.
/// A point exactly on a boundary belongs to the layer below it.
#[inline]
pub fn layer_index(depths: &[f64], z: f64) -> usize {
    depths.iter().take_while(|&&d| d >= z).count()
}

/// One layer-cake realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarthRealization {
    pub knots_x: Vec<f64>,
    /// `[boundary][knot]` depths in meters.
    pub boundary_depths: Vec<Vec<f64>>,
    pub layer_resistivities: Vec<f64>,
}

impl EarthRealization {
    /// Builds a realization with boundaries that are constant along the lateral.
    pub fn flat(knots_x: Vec<f64>, depths: &[f64], layer_resistivities: Vec<f64>) -> Result<Self> {
        let model = Self {
            boundary_depths: depths.iter().map(|&d| vec![d; knots_x.len()]).collect(),
            knots_x,
            layer_resistivities,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots_x.len() < 2 || self.knots_x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("knots_x must hold at least two strictly increasing values"));
        }
        if self.layer_resistivities.len() != self.boundary_depths.len() + 1 {
            return Err(Error::arg("layer count must equal boundary count + 1"));
        }
        if self.boundary_depths.is_empty() || !self.boundary_depths.len().is_multiple_of(2) {
            return Err(Error::arg("boundaries must come in pairs so every sand is bounded"));
        }
        for row in &self.boundary_depths {
            if row.len() != self.knots_x.len() || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("boundary depth rows must be finite and match knots_x"));
            }
        }
        for k in 0..self.knots_x.len() {
            for b in 1..self.boundary_depths.len() {
                if self.boundary_depths[b][k] >= self.boundary_depths[b - 1][k] {
                    return Err(Error::arg(format!("boundaries {} and {} cross at knot {k}", b - 1, b)));
                }
            }
        }
        Ok(())
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_depths.len()
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.knots_x[0], self.knots_x[self.knots_x.len() - 1])
    }

    pub fn check_x(&self, x: f64) -> Result<()> {
        let (min, max) = self.extent();
        if x >= min && x <= max {
            Ok(())
        } else {
            Err(Error::Domain { x, min, max })
        }
    }

    /// Knot interval containing `x` and the interpolation weight of its right end.
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.knots_x.len();
        let i = match self.knots_x.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (a, b) = (self.knots_x[i], self.knots_x[i + 1]);
        (i, ((x - a) / (b - a)).clamp(0.0, 1.0))
    }

    /// Interpolated boundary depths at `x`, written into `out`.
    /// `x` must already be inside the extent.
    pub fn boundaries_at_into(&self, x: f64, out: &mut [f64]) {
        let (i, t) = self.locate(x);
        for (o, row) in out.iter_mut().zip(&self.boundary_depths) {
            *o = row[i] + t * (row[i + 1] - row[i]);
        }
    }

    pub fn boundaries_at(&self, x: f64) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut out = vec![0.0; self.boundary_count()];
        self.boundaries_at_into(x, &mut out);
        Ok(out)
    }

    pub fn resistivity_at(&self, x: f64, z: f64) -> Result<f64> {
        let depths = self.boundaries_at(x)?;
        Ok(self.layer_resistivities[layer_index(&depths, z)])
    }

    pub fn layer_query(&self, x: f64, z: f64) -> Result<LayerInfo> {
        let depths = self.boundaries_at(x)?;
        Ok(layer_info(&depths, z))
    }

    /// Thickness of `layer` at `x`.
    pub fn thickness_at(&self, layer: usize, x: f64) -> Result<f64> {
        let depths = self.boundaries_at(x)?;
        if layer > depths.len() {
            return Err(Error::arg(format!("layer {layer} does not exist")));
        }
        if layer == 0 || layer == depths.len() {
            return Ok(f64::INFINITY);
        }
        Ok(depths[layer - 1] - depths[layer])
    }

    /// Re-sorts the boundaries at every knot and separates them by at least
    /// [`MIN_THICKNESS`] while keeping their mean depth.
    pub fn repair(&mut self) {
        let nb = self.boundary_count();
        let mut column = vec![0.0; nb];
        for k in 0..self.knots_x.len() {
            for (c, row) in column.iter_mut().zip(&self.boundary_depths) {
                *c = row[k];
            }
            repair_column(&mut column);
            for (c, row) in column.iter().zip(self.boundary_depths.iter_mut()) {
                row[k] = *c;
            }
        }
    }
}

/// Layer information for a point given the boundary depths at its `x`.
#[inline]
pub fn layer_info(depths: &[f64], z: f64) -> LayerInfo {
    let layer = layer_index(depths, z);
    let roof = if layer == 0 { f64::INFINITY } else { depths[layer - 1] };
    let floor = if layer == depths.len() { f64::NEG_INFINITY } else { depths[layer] };
    LayerInfo {
        layer,
        kind: LayerKind::of_layer(layer),
        thickness: roof - floor,
        depth_below_roof: roof - z,
    }
}

fn repair_column(column: &mut [f64]) {
    let needs_repair = column.windows(2).any(|w| w[0] - w[1] < MIN_THICKNESS);
    if !needs_repair {
        return;
    }
    let mean_before = column.iter().sum::<f64>() / column.len() as f64;
    column.sort_by(|a, b| b.total_cmp(a));
    for b in 1..column.len() {
        let limit = column[b - 1] - MIN_THICKNESS;
        if column[b] > limit {
            column[b] = limit;
        }
    }
    let shift = mean_before - column.iter().sum::<f64>() / column.len() as f64;
    for v in column.iter_mut() {
        *v += shift;
    }
}

/// Equally or unequally weighted set of realizations sharing knots and resistivities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<EarthRealization>,
    pub weights: Vec<f64>,
}

impl Ensemble {
    pub fn uniform(members: Vec<EarthRealization>) -> Result<Self> {
        let n = members.len();
        let ens = Self { members, weights: vec![1.0 / n.max(1) as f64; n] };
        ens.validate()?;
        Ok(ens)
    }

    /// Normalizes `weights` to sum to one.
    pub fn with_weights(members: Vec<EarthRealization>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != members.len() {
            return Err(Error::arg("one weight per member is required"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::arg("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::arg("weights must not all be zero"));
        }
        let ens = Self { members, weights: weights.iter().map(|w| w / total).collect() };
        ens.validate()?;
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.members.first() else {
            return Err(Error::arg("ensemble is empty"));
        };
        if self.weights.len() != self.members.len() {
            return Err(Error::arg("one weight per member is required"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::arg("weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("weights sum to {total}, expected 1")));
        }
        for m in &self.members {
            m.validate()?;
            if m.knots_x != first.knots_x || m.layer_resistivities != first.layer_resistivities {
                return Err(Error::arg("members must share knots and layer resistivities"));
            }
        }
        Ok(())
    }

    /// Boundary depths stacked boundary-major, one column per member.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        let first = &self.members[0];
        let nk = first.knots_x.len();
        let rows = first.boundary_count() * nk;
        DMatrix::from_fn(rows, self.members.len(), |r, c| {
            self.members[c].boundary_depths[r / nk][r % nk]
        })
    }

    /// Rebuilds members from a state matrix produced by [`Ensemble::state_matrix`],
    /// repairing crossings. Weights are kept.
    pub fn with_state(&self, state: &DMatrix<f64>) -> Result<Self> {
        let first = &self.members[0];
        let nk = first.knots_x.len();
        let nb = first.boundary_count();
        if state.nrows() != nb * nk || state.ncols() != self.members.len() {
            return Err(Error::arg("state matrix shape does not match the ensemble"));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite state after update".into()));
        }
        let members = (0..state.ncols())
            .map(|c| {
                let mut m = EarthRealization {
                    knots_x: first.knots_x.clone(),
                    boundary_depths: (0..nb)
                        .map(|b| (0..nk).map(|k| state[(b * nk + k, c)]).collect())
                        .collect(),
                    layer_resistivities: first.layer_resistivities.clone(),
                };
                m.repair();
                m
            })
            .collect();
        Ok(Self { members, weights: self.weights.clone() })
    }
}

/// Square root factor `L` with `L L^T = C` for a symmetric positive
/// semi-definite matrix, via eigendecomposition.
fn psd_sqrt(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(DMatrix::zeros(cov.nrows(), cov.ncols()));
    }
    let eig = SymmetricEigen::new(cov);
    let tol = 1e-9 * scale * eig.eigenvalues.len() as f64;
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if !l.is_finite() || l < -tol {
            return Err(Error::Generation(format!(
                "covariance is not positive semi-definite (eigenvalue {l:e})"
            )));
        }
        roots[i] = l.max(0.0).sqrt();
    }
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Draws `n` prior realizations.
pub fn generate_ensemble(params: &GeostatParams, n: usize, seed: u64) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::arg("ensemble size must be at least 2"));
    }
    let members = sample(params, n, seeds::mix(seed, seeds::stream::ENSEMBLE))?;
    Ensemble::uniform(members)
}

/// Draws one synthetic truth with the same sampler as [`generate_ensemble`]
/// on an independent seed stream.
pub fn generate_truth(params: &GeostatParams, seed: u64) -> Result<EarthRealization> {
    let mut members = sample(params, 1, seeds::mix(seed, seeds::stream::TRUTH))?;
    Ok(members.remove(0))
}

fn sample(params: &GeostatParams, n: usize, seed: u64) -> Result<Vec<EarthRealization>> {
    params.validate()?;
    let factor = psd_sqrt(params.covariance())?;
    let zero_field = factor.iter().all(|&v| v == 0.0);
    let mean = params.mean_model();
    let nk = mean.knots_x.len();
    let dim = factor.nrows();
    let mut rng = seeds::rng(seed);
    let mut members = Vec::with_capacity(n);
    for _ in 0..n {
        let mut m = mean.clone();
        if !zero_field {
            let xi = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let field = &factor * xi;
            for (r, g) in field.iter().enumerate() {
                m.boundary_depths[r / nk][r % nk] += g;
            }
            m.repair();
        }
        members.push(m);
    }
    Ok(members)
}
