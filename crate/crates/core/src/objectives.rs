//! Trajectory constraints and the weighted multi-objective value function.
//!
//! Values are expressed in units of one reference stand drilled along a
//! one-meter-thick reference sand. Profits are positive and costs negative.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::{layer_info, EarthRealization, LayerKind, STAND_LENGTH};

/// Midpoints per segment for the position and sand-quality integrals.
pub const QUADRATURE_POINTS: usize = 16;

/// Depth band below a sand roof where the position value is doubled.
pub const SWEET_SPOT: (f64, f64) = (0.75, 2.25);

/// Sand-quality value per sand ordinal (top sand, bottom sand).
pub const SAND_QUALITY: [f64; 2] = [7.0, 14.0];

/// Drilling cost per meter of hole.
pub const COST_PER_METER: f64 = 0.003;

/// A straight piece of trajectory between two points `(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl Segment {
    pub fn new(start: (f64, f64), end: (f64, f64)) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end.0 - self.start.0).hypot(self.end.1 - self.start.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub w_position: f64,
    pub w_sand: f64,
    pub w_cost: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self::primary()
    }
}

impl ObjectiveWeights {
    /// Position plus drilling cost.
    pub fn primary() -> Self {
        Self { w_position: 1.0, w_sand: 0.0, w_cost: 1.0 }
    }

    /// Down-weighted position, sand quality added.
    pub fn alternative() -> Self {
        Self { w_position: 0.3, w_sand: 0.7, w_cost: 1.0 }
    }

    pub fn zero() -> Self {
        Self { w_position: 0.0, w_sand: 0.0, w_cost: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_position", self.w_position), ("w_sand", self.w_sand), ("w_cost", self.w_cost)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::arg(format!("{name} must be a non-negative number, got {w}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { w_position: c * self.w_position, w_sand: c * self.w_sand, w_cost: c * self.w_cost }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Maximum change of inclination between consecutive segments, degrees.
    pub max_dogleg: f64,
    /// Maximum inclination, degrees.
    pub max_inclination: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self { max_dogleg: 2.0, max_inclination: 90.0 }
    }
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_dogleg > 0.0 && self.max_inclination > 0.0) {
            return Err(Error::arg("constraint limits must be positive"));
        }
        Ok(())
    }
}

/// Angle of the segment from vertical in degrees; 90 for a horizontal segment.
pub fn inclination(segment: &Segment) -> Result<f64> {
    let dx = segment.end.0 - segment.start.0;
    let drop = segment.start.1 - segment.end.1;
    if drop < 0.0 {
        return Err(Error::Constraint {
            constraint: "inclination",
            detail: format!("segment climbs {:.3} m; inclination would exceed 90 degrees", -drop),
        });
    }
    Ok(inclination_from_drop(dx, drop))
}

/// Inclination of a segment advancing `dx` horizontally while dropping `drop >= 0`.
#[inline]
pub fn inclination_from_drop(dx: f64, drop: f64) -> f64 {
    if drop == 0.0 {
        90.0
    } else {
        (dx / drop).atan().to_degrees()
    }
}

pub fn dogleg_ok(prev_inclination: f64, segment: &Segment, constraints: &Constraints) -> bool {
    match inclination(segment) {
        Ok(a) => (a - prev_inclination).abs() <= constraints.max_dogleg && a <= constraints.max_inclination,
        Err(_) => false,
    }
}

/// Unweighted objective values of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Components {
    pub position: f64,
    pub sand: f64,
    pub cost: f64,
}

/// Supplies boundary depths at the quadrature abscissas of a segment.
pub(crate) trait DepthSource {
    fn depths(&mut self, point: usize, x: f64) -> &[f64];
}

struct Interpolated<'a> {
    model: &'a EarthRealization,
    buf: Vec<f64>,
}

impl DepthSource for Interpolated<'_> {
    fn depths(&mut self, _point: usize, x: f64) -> &[f64] {
        self.model.boundaries_at_into(x, &mut self.buf);
        &self.buf
    }
}

#[inline]
fn sand_quality(ordinal: usize) -> f64 {
    SAND_QUALITY[ordinal.min(SAND_QUALITY.len() - 1)]
}

/// Midpoint-rule evaluation of the position and sand integrands.
#[inline]
pub(crate) fn integrate<S: DepthSource>(segment: &Segment, points: usize, src: &mut S) -> Components {
    let (x0, z0) = segment.start;
    let (x1, z1) = segment.end;
    let n = points as f64;
    let (mut fp, mut fs) = (0.0, 0.0);
    for m in 0..points {
        let t = (m as f64 + 0.5) / n;
        let x = x0 + t * (x1 - x0);
        let z = z0 + t * (z1 - z0);
        let info = layer_info(src.depths(m, x), z);
        if let LayerKind::Sand { ordinal } = info.kind {
            let h = info.thickness;
            let r = info.depth_below_roof;
            fp += if r >= SWEET_SPOT.0 && r <= SWEET_SPOT.1 { 2.0 * h } else { h };
            fs += sand_quality(ordinal);
        }
    }
    let scale = (x1 - x0) / n / STAND_LENGTH;
    Components { position: fp * scale, sand: fs * scale, cost: -COST_PER_METER * segment.length() }
}

fn check_segment(segment: &Segment, model: &EarthRealization) -> Result<()> {
    model.check_x(segment.start.0)?;
    model.check_x(segment.end.0)?;
    if segment.end.0 < segment.start.0 {
        return Err(Error::arg("segment must advance along x"));
    }
    Ok(())
}

pub fn components(segment: &Segment, model: &EarthRealization, points: usize) -> Result<Components> {
    check_segment(segment, model)?;
    let mut src = Interpolated { model, buf: vec![0.0; model.boundary_count()] };
    Ok(integrate(segment, points.max(1), &mut src))
}

/// Position objective: thickness of the containing sand, doubled in the sweet spot.
pub fn position_value(segment: &Segment, model: &EarthRealization) -> Result<f64> {
    Ok(components(segment, model, QUADRATURE_POINTS)?.position)
}

/// Sand-quality objective.
pub fn sand_value(segment: &Segment, model: &EarthRealization) -> Result<f64> {
    Ok(components(segment, model, QUADRATURE_POINTS)?.sand)
}

/// Drilling cost, proportional to the measured length of the segment.
pub fn drilling_cost(segment: &Segment) -> f64 {
    -COST_PER_METER * segment.length()
}

pub fn segment_value(segment: &Segment, model: &EarthRealization, weights: &ObjectiveWeights) -> Result<f64> {
    ValueFunction::new(*weights).segment_value(segment, model)
}

/// A user-supplied objective evaluated per segment, in value units.
pub trait SegmentObjective: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, segment: &Segment, model: &EarthRealization) -> Result<f64>;
}

/// Weighted sum of the built-in objectives plus any registered extras.
#[derive(Clone, Default)]
pub struct ValueFunction {
    pub weights: ObjectiveWeights,
    extras: Vec<(f64, Arc<dyn SegmentObjective>)>,
}

impl fmt::Debug for ValueFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let extras: Vec<_> = self.extras.iter().map(|(w, o)| (w, o.name().to_string())).collect();
        f.debug_struct("ValueFunction").field("weights", &self.weights).field("extras", &extras).finish()
    }
}

impl From<ObjectiveWeights> for ValueFunction {
    fn from(weights: ObjectiveWeights) -> Self {
        Self::new(weights)
    }
}

impl ValueFunction {
    pub fn new(weights: ObjectiveWeights) -> Self {
        Self { weights, extras: Vec::new() }
    }

    /// Registers an additional objective with a non-negative weight.
    pub fn with_objective(mut self, weight: f64, objective: Arc<dyn SegmentObjective>) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::arg("objective weights must be non-negative"));
        }
        self.extras.push((weight, objective));
        Ok(self)
    }

    pub fn has_extras(&self) -> bool {
        !self.extras.is_empty()
    }

    #[inline]
    pub(crate) fn combine(&self, c: &Components) -> f64 {
        let w = &self.weights;
        w.w_position * c.position + w.w_sand * c.sand + w.w_cost * c.cost
    }

    pub(crate) fn extras_value(&self, segment: &Segment, model: &EarthRealization) -> Result<f64> {
        let mut total = 0.0;
        for (w, o) in &self.extras {
            total += w * o.value(segment, model)?;
        }
        Ok(total)
    }

    pub fn segment_value(&self, segment: &Segment, model: &EarthRealization) -> Result<f64> {
        let c = components(segment, model, QUADRATURE_POINTS)?;
        let mut v = self.combine(&c);
        if self.has_extras() {
            v += self.extras_value(segment, model)?;
        }
        Ok(v)
    }

    /// Sum of segment values along a polyline.
    pub fn trajectory_value(&self, points: &[(f64, f64)], model: &EarthRealization) -> Result<f64> {
        points
            .windows(2)
            .map(|w| self.segment_value(&Segment::new(w[0], w[1]), model))
            .sum()
    }
}
