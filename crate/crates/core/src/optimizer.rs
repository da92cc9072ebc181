//! Two-step decision algorithm.
//!
//! Step one solves, for every realization independently, a backward dynamic
//! program over the discrete trajectory grid: the value of a state is the
//! best of stopping (zero) and every dogleg-feasible next segment plus the
//! discounted value of the state it leads to. Step two picks the single
//! immediate action (stop or one of the feasible next depths) with the best
//! probability-weighted value across realizations. Only that first action is
//! committed; the continuation may differ per realization.
//!
//! A DP state is `(k, z_index, incoming drop)`. The incoming drop, the depth
//! index difference of the segment that arrived at the node, encodes the
//! inclination exactly on the grid. The bit itself carries its true
//! inclination, which need not lie on the grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::{EarthRealization, Ensemble, STAND_LENGTH};
use crate::objectives::{inclination_from_drop, integrate, Constraints, DepthSource, Segment, ValueFunction, QUADRATURE_POINTS};

/// Geometry of the decision grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub dx: f64,
    pub steps: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x0: 0.0, dx: STAND_LENGTH, steps: 13, z_min: -30.0, z_max: 16.0, dz: 0.25 }
    }
}

/// Decision points along x and candidate depths at each of them.
///
/// Depth nodes are indexed from the top: `z_nodes[i] = z_max - i * dz`, so a
/// non-climbing segment always moves to an equal or larger index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionGrid {
    pub x_nodes: Vec<f64>,
    pub z_nodes: Vec<f64>,
    pub constraints: Constraints,
    #[serde(skip)]
    dz: f64,
    #[serde(skip)]
    angles: Vec<f64>,
    #[serde(skip)]
    ranges: Vec<Option<(usize, usize)>>,
}

impl DecisionGrid {
    pub fn new(spec: GridSpec, constraints: Constraints) -> Result<Self> {
        constraints.validate()?;
        if !(spec.dx > 0.0 && spec.dz > 0.0 && spec.z_max > spec.z_min) || spec.steps == 0 {
            return Err(Error::arg("grid needs positive spacings, at least one step and z_max > z_min"));
        }
        let nz = ((spec.z_max - spec.z_min) / spec.dz + 1e-9).floor() as usize + 1;
        if nz > i16::MAX as usize {
            return Err(Error::arg("depth grid is too fine"));
        }
        let x_nodes = (0..=spec.steps).map(|k| spec.x0 + k as f64 * spec.dx).collect();
        let z_nodes = (0..nz).map(|i| spec.z_max - i as f64 * spec.dz).collect();
        let angles: Vec<f64> = (0..nz).map(|d| inclination_from_drop(spec.dx, d as f64 * spec.dz)).collect();
        let mut grid = Self { x_nodes, z_nodes, constraints, dz: spec.dz, angles, ranges: Vec::new() };
        grid.ranges = (0..nz).map(|d| grid.drop_range(grid.angles[d])).collect();
        Ok(grid)
    }

    pub fn default_grid() -> Self {
        Self::new(GridSpec::default(), Constraints::default()).expect("default grid is valid")
    }

    pub fn steps(&self) -> usize {
        self.x_nodes.len() - 1
    }

    pub fn nz(&self) -> usize {
        self.z_nodes.len()
    }

    pub fn dx(&self) -> f64 {
        self.x_nodes[1] - self.x_nodes[0]
    }

    /// Inclination of a segment that drops `drop` depth indices.
    pub fn drop_inclination(&self, drop: usize) -> f64 {
        self.angles[drop]
    }

    /// Index of the node at depth `z`, if `z` lies on the grid.
    pub fn z_index(&self, z: f64) -> Option<usize> {
        let f = (self.z_nodes[0] - z) / self.dz;
        let i = f.round();
        if i < 0.0 || i as usize >= self.nz() || (f - i).abs() > 1e-6 {
            None
        } else {
            Some(i as usize)
        }
    }

    /// Contiguous range of drops permitted after a segment with inclination `prev`.
    /// Drops grow as inclination falls, so feasibility is an interval.
    fn drop_range(&self, prev: f64) -> Option<(usize, usize)> {
        let c = &self.constraints;
        let ok = |d: usize| {
            let a = self.angles[d];
            (a - prev).abs() <= c.max_dogleg && a <= c.max_inclination
        };
        let lo = (0..self.angles.len()).find(|&d| ok(d))?;
        let hi = (lo..self.angles.len()).take_while(|&d| ok(d)).last().unwrap_or(lo);
        Some((lo, hi))
    }

    /// Feasible next depth indices from node `z_index` with incoming inclination `prev`.
    pub fn feasible_targets(&self, z_index: usize, prev: f64) -> Vec<usize> {
        match self.drop_range(prev) {
            Some((lo, hi)) => (lo..=hi).map(|d| z_index + d).filter(|&t| t < self.nz()).collect(),
            None => Vec::new(),
        }
    }

    fn check_bit(&self, bit: &BitState) -> Result<()> {
        if bit.k > self.steps() || bit.z_index >= self.nz() || !(bit.inclination > 0.0 && bit.inclination <= 90.0) {
            return Err(Error::arg(format!("bit state {bit:?} is outside the decision grid")));
        }
        Ok(())
    }

    fn check_model(&self, model: &EarthRealization, from_k: usize) -> Result<()> {
        model.check_x(self.x_nodes[from_k])?;
        model.check_x(self.x_nodes[self.steps()])
    }
}

/// Position and incoming inclination of the drill bit on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitState {
    pub k: usize,
    pub z_index: usize,
    pub inclination: f64,
}

/// A DP state; `prev_z_index == None` denotes the bit (root) of a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DPState {
    pub k: usize,
    pub z_index: usize,
    pub prev_z_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Successor {
    Stop,
    /// Last decision point reached.
    End,
    Next(usize),
}

const UNSOLVED: i16 = -3;
const END: i16 = -2;
const STOP: i16 = -1;

fn decode(s: i16) -> Option<Successor> {
    match s {
        STOP => Some(Successor::Stop),
        END => Some(Successor::End),
        d if d >= 0 => Some(Successor::Next(d as usize)),
        _ => None,
    }
}

/// Solved values and optimal successors of one realization, from one root.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    pub root: BitState,
    pub gamma: f64,
    root_value: f64,
    root_successor: Successor,
    nz: usize,
    nd: usize,
    steps: usize,
    values: Vec<f64>,
    successors: Vec<i16>,
    evaluations: usize,
}

impl PolicyTable {
    #[inline]
    fn idx(&self, k: usize, i: usize, d: usize) -> usize {
        ((k - self.root.k - 1) * self.nz + i) * self.nd + d
    }

    pub fn root_value(&self) -> f64 {
        self.root_value
    }

    /// Number of states whose value was computed.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Number of states the table can represent.
    pub fn state_count(&self) -> usize {
        self.values.len() + 1
    }

    fn lookup(&self, state: &DPState) -> Option<(f64, Successor)> {
        match state.prev_z_index {
            None if state.k == self.root.k && state.z_index == self.root.z_index => {
                Some((self.root_value, self.root_successor))
            }
            None => None,
            Some(p) => {
                if state.k <= self.root.k || state.k > self.steps || state.z_index >= self.nz || p > state.z_index {
                    return None;
                }
                let d = state.z_index - p;
                if d >= self.nd {
                    return None;
                }
                let j = self.idx(state.k, state.z_index, d);
                decode(self.successors[j]).map(|s| (self.values[j], s))
            }
        }
    }

    pub fn value(&self, state: &DPState) -> Option<f64> {
        self.lookup(state).map(|(v, _)| v)
    }

    pub fn successor(&self, state: &DPState) -> Option<Successor> {
        self.lookup(state).map(|(_, s)| s)
    }
}

/// Boundary depths of one realization at every quadrature abscissa of every
/// grid interval from `from_k` on.
struct PreparedModel {
    from_k: usize,
    nb: usize,
    depths: Vec<f64>,
}

impl PreparedModel {
    fn new(grid: &DecisionGrid, model: &EarthRealization, from_k: usize) -> Self {
        let nb = model.boundary_count();
        let n = QUADRATURE_POINTS as f64;
        let mut depths = vec![0.0; (grid.steps() - from_k) * QUADRATURE_POINTS * nb];
        for k in from_k..grid.steps() {
            let (x0, x1) = (grid.x_nodes[k], grid.x_nodes[k + 1]);
            for m in 0..QUADRATURE_POINTS {
                let t = (m as f64 + 0.5) / n;
                let off = ((k - from_k) * QUADRATURE_POINTS + m) * nb;
                model.boundaries_at_into(x0 + t * (x1 - x0), &mut depths[off..off + nb]);
            }
        }
        Self { from_k, nb, depths }
    }

    fn interval(&self, k: usize) -> Slab<'_> {
        let len = QUADRATURE_POINTS * self.nb;
        let off = (k - self.from_k) * len;
        Slab { data: &self.depths[off..off + len], nb: self.nb }
    }
}

struct Slab<'a> {
    data: &'a [f64],
    nb: usize,
}

impl DepthSource for Slab<'_> {
    #[inline]
    fn depths(&mut self, point: usize, _x: f64) -> &[f64] {
        &self.data[point * self.nb..(point + 1) * self.nb]
    }
}

struct Evaluator<'a> {
    grid: &'a DecisionGrid,
    model: &'a EarthRealization,
    value_fn: &'a ValueFunction,
    prepared: PreparedModel,
}

impl Evaluator<'_> {
    fn segment(&self, k: usize, i: usize, j: usize) -> Segment {
        Segment::new((self.grid.x_nodes[k], self.grid.z_nodes[i]), (self.grid.x_nodes[k + 1], self.grid.z_nodes[j]))
    }

    #[inline]
    fn value(&self, k: usize, i: usize, j: usize) -> Result<f64> {
        let seg = self.segment(k, i, j);
        let c = integrate(&seg, QUADRATURE_POINTS, &mut self.prepared.interval(k));
        let mut v = self.value_fn.combine(&c);
        if self.value_fn.has_extras() {
            v += self.value_fn.extras_value(&seg, self.model)?;
        }
        Ok(v)
    }
}

/// Candidate ordering: higher value, then smaller inclination change, then shallower target.
#[inline]
fn better(v: f64, turn: f64, d: usize, best: Option<(f64, f64, usize)>) -> bool {
    match best {
        None => true,
        Some((bv, bt, bd)) => v > bv || (v == bv && (turn < bt || (turn == bt && d < bd))),
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::arg(format!("discount factor must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// Largest incoming drop reachable from `bit` within the remaining steps.
fn reachable_drop_bound(grid: &DecisionGrid, bit: &BitState) -> usize {
    let Some((mut lo, mut hi)) = grid.drop_range(bit.inclination) else {
        return 0;
    };
    let mut max = hi;
    for _ in bit.k + 1..grid.steps() {
        let (a, b) = (grid.ranges[lo], grid.ranges[hi]);
        let (Some(a), Some(b)) = (a, b) else { break };
        lo = a.0.min(b.0);
        hi = a.1.max(b.1);
        max = max.max(hi);
    }
    max.min(grid.nz() - 1)
}

/// Backward dynamic program for one realization from the bit state.
///
/// `V(state) = max(0, max_l segment(state -> l) + gamma * V(l))`; the zero
/// branch is stopping. Only states reachable from the bit are evaluated.
pub fn solve_realization(
    grid: &DecisionGrid,
    model: &EarthRealization,
    value_fn: &ValueFunction,
    gamma: f64,
    bit: BitState,
) -> Result<PolicyTable> {
    check_gamma(gamma)?;
    grid.check_bit(&bit)?;
    grid.check_model(model, bit.k)?;
    value_fn.weights.validate()?;

    let steps = grid.steps();
    let nz = grid.nz();
    let nd = reachable_drop_bound(grid, &bit) + 1;
    let layers = steps - bit.k;
    let mut table = PolicyTable {
        root: bit,
        gamma,
        root_value: 0.0,
        root_successor: Successor::End,
        nz,
        nd,
        steps,
        values: vec![0.0; layers * nz * nd],
        successors: vec![UNSOLVED; layers * nz * nd],
        evaluations: 1,
    };
    if bit.k == steps {
        return Ok(table);
    }

    let eval = Evaluator { grid, model, value_fn, prepared: PreparedModel::new(grid, model, bit.k) };

    // Forward reachability; reachable-but-unsolved states are marked in `successors`.
    const REACHED: i16 = -4;
    let root_targets = grid.drop_range(bit.inclination);
    if let Some((lo, hi)) = root_targets {
        for d in lo..=hi.min(nd - 1) {
            let t = bit.z_index + d;
            if t < nz {
                let j = table.idx(bit.k + 1, t, d);
                table.successors[j] = REACHED;
            }
        }
    }
    for k in bit.k + 1..steps {
        for i in 0..nz {
            for d in 0..nd {
                if table.successors[table.idx(k, i, d)] != REACHED {
                    continue;
                }
                if let Some((lo, hi)) = grid.ranges[d] {
                    for d2 in lo..=hi.min(nd - 1) {
                        let t = i + d2;
                        if t >= nz {
                            break;
                        }
                        let j = table.idx(k + 1, t, d2);
                        table.successors[j] = REACHED;
                    }
                }
            }
        }
    }

    // Terminal layer.
    for i in 0..nz {
        for d in 0..nd {
            let j = table.idx(steps, i, d);
            if table.successors[j] == REACHED {
                table.successors[j] = END;
                table.values[j] = 0.0;
                table.evaluations += 1;
            }
        }
    }

    // Segment values depend on (k, i, target) only; cache them per interval.
    let mut seg_cache = vec![f64::NAN; nz * nd];
    for k in (bit.k + 1..steps).rev() {
        seg_cache.iter_mut().for_each(|v| *v = f64::NAN);
        for i in 0..nz {
            for d in 0..nd {
                let j = table.idx(k, i, d);
                if table.successors[j] != REACHED {
                    continue;
                }
                let Some((lo, hi)) = grid.ranges[d] else {
                    table.successors[j] = STOP;
                    table.values[j] = 0.0;
                    table.evaluations += 1;
                    continue;
                };
                let prev = grid.angles[d];
                let mut best: Option<(f64, f64, usize)> = None;
                for d2 in lo..=hi.min(nd - 1) {
                    let t = i + d2;
                    if t >= nz {
                        break;
                    }
                    let c = &mut seg_cache[i * nd + d2];
                    if c.is_nan() {
                        *c = eval.value(k, i, t)?;
                    }
                    let v = *c + gamma * table.values[table.idx(k + 1, t, d2)];
                    let turn = (grid.angles[d2] - prev).abs();
                    if better(v, turn, d2, best) {
                        best = Some((v, turn, d2));
                    }
                }
                let (value, succ) = match best {
                    Some((v, _, d2)) if v >= 0.0 => (v, d2 as i16),
                    _ => (0.0, STOP),
                };
                table.values[j] = value;
                table.successors[j] = succ;
                table.evaluations += 1;
            }
        }
    }

    // Root.
    let mut best: Option<(f64, f64, usize)> = None;
    if let Some((lo, hi)) = root_targets {
        for d in lo..=hi.min(nd - 1) {
            let t = bit.z_index + d;
            if t >= nz {
                break;
            }
            let v = eval.value(bit.k, bit.z_index, t)? + gamma * table.values[table.idx(bit.k + 1, t, d)];
            let turn = (grid.angles[d] - bit.inclination).abs();
            if better(v, turn, d, best) {
                best = Some((v, turn, d));
            }
        }
    }
    (table.root_value, table.root_successor) = match best {
        Some((v, _, d)) if v >= 0.0 => (v, Successor::Next(d)),
        _ => (0.0, Successor::Stop),
    };
    Ok(table)
}

/// Follows optimal successors from `from` until stopping or the end of the grid.
/// Returns the visited `(x, z)` points, starting with `from`.
pub fn optimal_trajectory(policy: &PolicyTable, grid: &DecisionGrid, from: DPState) -> Result<Vec<(f64, f64)>> {
    let mut state = from;
    let mut points = vec![(grid.x_nodes[state.k], grid.z_nodes[state.z_index])];
    loop {
        let succ = policy
            .successor(&state)
            .ok_or_else(|| Error::Internal(format!("state {state:?} was not solved")))?;
        match succ {
            Successor::Stop | Successor::End => return Ok(points),
            Successor::Next(d) => {
                let next = DPState { k: state.k + 1, z_index: state.z_index + d, prev_z_index: Some(state.z_index) };
                points.push((grid.x_nodes[next.k], grid.z_nodes[next.z_index]));
                state = next;
            }
        }
    }
}

/// The single immediate action recommended at the bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum Action {
    Steer { target_z: f64, target_index: usize, inclination_deg: f64 },
    Stop,
}

/// Outlook of one realization under the recommended action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationOutlook {
    /// Committed next segment followed by the realization's own optimum.
    pub trajectory: Vec<(f64, f64)>,
    /// Immediate value plus discounted optimal future value, in units.
    pub predicted_value: f64,
}

/// Expected value of one immediate alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternativeValue {
    pub target_index: usize,
    pub expected_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    #[serde(flatten)]
    pub action: Action,
    pub expected_value: f64,
    pub per_realization: Vec<RealizationOutlook>,
    pub alternatives: Vec<AlternativeValue>,
}

impl Recommendation {
    pub fn is_stop(&self) -> bool {
        matches!(self.action, Action::Stop)
    }
}

/// What one realization contributes to the robust step.
struct MemberOutlook {
    immediate: Vec<f64>,
    future: Vec<f64>,
    continuation: Vec<Vec<(f64, f64)>>,
}

fn member_outlook(
    grid: &DecisionGrid,
    model: &EarthRealization,
    value_fn: &ValueFunction,
    gamma: f64,
    bit: BitState,
    targets: &[usize],
) -> Result<MemberOutlook> {
    let policy = solve_realization(grid, model, value_fn, gamma, bit)?;
    let prepared = PreparedModel::new(grid, model, bit.k);
    let eval = Evaluator { grid, model, value_fn, prepared };
    let mut out = MemberOutlook {
        immediate: Vec::with_capacity(targets.len()),
        future: Vec::with_capacity(targets.len()),
        continuation: Vec::with_capacity(targets.len()),
    };
    for &t in targets {
        let next = DPState { k: bit.k + 1, z_index: t, prev_z_index: Some(bit.z_index) };
        out.immediate.push(eval.value(bit.k, bit.z_index, t)?);
        out.future.push(policy.value(&next).ok_or_else(|| Error::Internal("alternative not solved".into()))?);
        out.continuation.push(optimal_trajectory(&policy, grid, next)?);
    }
    Ok(out)
}

/// Robust one-step decision across the ensemble.
pub fn robust_decision(
    grid: &DecisionGrid,
    ensemble: &Ensemble,
    value_fn: &ValueFunction,
    gamma: f64,
    bit: BitState,
) -> Result<Recommendation> {
    if ensemble.is_empty() {
        return Err(Error::arg("ensemble is empty"));
    }
    if ensemble.weights.len() != ensemble.len() || ensemble.weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::arg("ensemble weights are invalid"));
    }
    check_gamma(gamma)?;
    grid.check_bit(&bit)?;
    let bit_point = (grid.x_nodes[bit.k], grid.z_nodes[bit.z_index]);
    let targets = if bit.k < grid.steps() { grid.feasible_targets(bit.z_index, bit.inclination) } else { Vec::new() };

    let outlooks: Vec<MemberOutlook> = ensemble
        .members
        .par_iter()
        .map(|m| member_outlook(grid, m, value_fn, gamma, bit, &targets))
        .collect::<Result<_>>()?;

    let total_weight: f64 = ensemble.weights.iter().sum();
    let mut alternatives = Vec::with_capacity(targets.len());
    let mut best: Option<(f64, f64, usize)> = None;
    for (a, &t) in targets.iter().enumerate() {
        let mut ev = 0.0;
        for (o, &w) in outlooks.iter().zip(&ensemble.weights) {
            ev += w / total_weight * (o.immediate[a] + gamma * o.future[a]);
        }
        alternatives.push(AlternativeValue { target_index: t, expected_value: ev });
        let turn = (grid.angles[t - bit.z_index] - bit.inclination).abs();
        if better(ev, turn, a, best) {
            best = Some((ev, turn, a));
        }
    }

    let chosen = match best {
        Some((ev, _, a)) if ev >= 0.0 => Some((ev, a)),
        _ => None,
    };
    let rec = match chosen {
        Some((ev, a)) => {
            let t = targets[a];
            let per_realization = outlooks
                .iter()
                .map(|o| {
                    let mut trajectory = vec![bit_point];
                    trajectory.extend_from_slice(&o.continuation[a]);
                    RealizationOutlook { trajectory, predicted_value: o.immediate[a] + gamma * o.future[a] }
                })
                .collect();
            Recommendation {
                action: Action::Steer {
                    target_z: grid.z_nodes[t],
                    target_index: t,
                    inclination_deg: grid.drop_inclination(t - bit.z_index),
                },
                expected_value: ev,
                per_realization,
                alternatives,
            }
        }
        None => Recommendation {
            action: Action::Stop,
            expected_value: 0.0,
            per_realization: outlooks
                .iter()
                .map(|_| RealizationOutlook { trajectory: vec![bit_point], predicted_value: 0.0 })
                .collect(),
            alternatives,
        },
    };
    Ok(rec)
}

/// Value of the trajectory optimized against a known model, with no discounting.
pub fn theoretical_maximum(grid: &DecisionGrid, truth: &EarthRealization, value_fn: &ValueFunction, bit: BitState) -> Result<f64> {
    Ok(solve_realization(grid, truth, value_fn, 1.0, bit)?.root_value())
}

/// As [`theoretical_maximum`], also returning the optimal trajectory.
pub fn optimal_plan(
    grid: &DecisionGrid,
    truth: &EarthRealization,
    value_fn: &ValueFunction,
    bit: BitState,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let policy = solve_realization(grid, truth, value_fn, 1.0, bit)?;
    let path = optimal_trajectory(&policy, grid, DPState { k: bit.k, z_index: bit.z_index, prev_z_index: None })?;
    Ok((policy.root_value(), path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomodel::GeostatParams;
    use crate::objectives::{dogleg_ok, ObjectiveWeights, Segment};

    fn knots() -> Vec<f64> {
        GeostatParams::default().knots()
    }

    fn primary() -> ValueFunction {
        ValueFunction::new(ObjectiveWeights::primary())
    }

    fn root(grid: &DecisionGrid, z: f64, incl: f64) -> BitState {
        BitState { k: 0, z_index: grid.z_index(z).unwrap(), inclination: incl }
    }

    #[test]
    fn default_grid_shape() {
        let g = DecisionGrid::default_grid();
        assert_eq!(g.steps(), 13);
        assert_eq!(g.nz(), 185);
        assert_eq!(g.z_index(15.0), Some(4));
        assert_eq!(g.z_index(15.1), None);
        assert!((g.x_nodes[13] - 371.28).abs() < 1e-9);
    }

    #[test]
    fn no_sand_means_stop_everywhere() {
        let g = DecisionGrid::default_grid();
        // The only sand sits far above the grid.
        let m = EarthRealization::flat(knots(), &[200.0, 199.0], vec![10.0, 100.0, 10.0]).unwrap();
        let bit = root(&g, 15.0, 80.0);
        let p = solve_realization(&g, &m, &primary(), 1.0, bit).unwrap();
        assert_eq!(p.root_value(), 0.0);
        let start = DPState { k: 0, z_index: bit.z_index, prev_z_index: None };
        assert_eq!(p.successor(&start), Some(Successor::Stop));
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert!(p.successors.iter().all(|&s| s == STOP || s == END || s == UNSOLVED));
        assert_eq!(optimal_trajectory(&p, &g, start).unwrap().len(), 1);
    }

    #[test]
    fn flat_sweet_spot_stays_flat() {
        let spec = GridSpec { steps: 3, z_min: -3.0, z_max: 1.0, ..Default::default() };
        let g = DecisionGrid::new(spec, Constraints::default()).unwrap();
        let m = EarthRealization::flat(knots(), &[0.0, -1.0], vec![10.0, 100.0, 10.0]).unwrap();
        let bit = root(&g, -0.75, 90.0);
        let p = solve_realization(&g, &m, &primary(), 1.0, bit).unwrap();
        let per_stand = 2.0 - 0.003 * STAND_LENGTH;
        assert!((p.root_value() - 3.0 * per_stand).abs() < 1e-9, "{}", p.root_value());
        let path = optimal_trajectory(&p, &g, DPState { k: 0, z_index: bit.z_index, prev_z_index: None }).unwrap();
        assert!(path.iter().all(|&(_, z)| z == -0.75));
        assert!(p.evaluations() <= p.state_count());
    }

    #[test]
    fn trajectories_respect_dogleg() {
        let g = DecisionGrid::default_grid();
        let m = GeostatParams::default().mean_model();
        let bit = root(&g, 15.0, 80.0);
        let (value, path) = optimal_plan(&g, &m, &primary(), bit).unwrap();
        assert!(value > 0.0);
        let mut prev = 80.0;
        for w in path.windows(2) {
            let seg = Segment::new(w[0], w[1]);
            let c = Constraints { max_dogleg: 2.0 + 1e-9, ..Default::default() };
            assert!(dogleg_ok(prev, &seg, &c), "{prev} -> {:?}", seg);
            prev = crate::objectives::inclination(&seg).unwrap();
        }
    }

    #[test]
    fn bit_outside_grid_rejected() {
        let g = DecisionGrid::default_grid();
        let m = GeostatParams::default().mean_model();
        let bit = BitState { k: 0, z_index: 999, inclination: 80.0 };
        assert!(matches!(solve_realization(&g, &m, &primary(), 1.0, bit), Err(Error::Argument(_))));
        let bit = BitState { k: 0, z_index: 4, inclination: 80.0 };
        assert!(solve_realization(&g, &m, &primary(), 1.5, bit).is_err());
    }

    #[test]
    fn identical_members_follow_the_member_optimum() {
        let g = DecisionGrid::default_grid();
        let m = crate::geomodel::generate_truth(&GeostatParams::default(), 3).unwrap();
        let ens = Ensemble::uniform(vec![m.clone(); 4]).unwrap();
        let bit = root(&g, 15.0, 80.0);
        let rec = robust_decision(&g, &ens, &primary(), 1.0, bit).unwrap();
        let p = solve_realization(&g, &m, &primary(), 1.0, bit).unwrap();
        let start = DPState { k: 0, z_index: bit.z_index, prev_z_index: None };
        match (rec.action, p.successor(&start).unwrap()) {
            (Action::Steer { target_index, .. }, Successor::Next(d)) => assert_eq!(target_index, bit.z_index + d),
            (Action::Stop, Successor::Stop) => {}
            other => panic!("mismatch {other:?}"),
        }
        assert!((rec.expected_value - p.root_value()).abs() < 1e-9);
    }

    #[test]
    fn recommendation_json_shape() {
        let rec = Recommendation {
            action: Action::Steer { target_z: -1.0, target_index: 68, inclination_deg: 81.1 },
            expected_value: 3.5,
            per_realization: vec![RealizationOutlook { trajectory: vec![(0.0, 15.0), (28.56, 10.0)], predicted_value: 3.5 }],
            alternatives: vec![],
        };
        let v = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["action"], "steer");
        assert_eq!(v["target_z"], -1.0);
        assert_eq!(v["inclination_deg"], 81.1);
        assert_eq!(v["per_realization"][0]["trajectory"][1][0], 28.56);
        let back: Recommendation = serde_json::from_value(v).unwrap();
        assert_eq!(back, rec);
        let stop = serde_json::to_value(Action::Stop).unwrap();
        assert_eq!(stop["action"], "stop");
    }
}
