//! Synthetic look-around resistivity tool.
//!
//! Each channel is a vertical average of the resistivity above (`Up`) or below
//! (`Down`) the tool, weighted by a triangular kernel that is largest at the
//! tool and vanishes at the depth of investigation. The kernel integrates to
//! one, so a homogeneous formation reads its own resistivity.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::{layer_index, EarthRealization};
use crate::seeds;

/// Midpoint subintervals used to evaluate each channel. Subintervals that
/// contain a layer boundary are split there, which makes the rule exact for
/// the piecewise-constant profile times the linear kernel.
pub const QUADRATURE_INTERVALS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `w(s) = 2 (doi - s) / doi^2` on `[0, doi]`.
    #[default]
    Triangular,
}

impl Kernel {
    #[inline]
    pub fn weight(self, s: f64, doi: f64) -> f64 {
        match self {
            Kernel::Triangular => 2.0 * (doi - s) / (doi * doi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub direction: Direction,
    #[serde(default)]
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub doi: f64,
    pub channels: Vec<Channel>,
    pub noise_variance: f64,
}

impl Default for ToolSpec {
    fn default() -> Self {
        Self {
            doi: 5.0,
            channels: vec![
                Channel { direction: Direction::Up, kernel: Kernel::Triangular },
                Channel { direction: Direction::Down, kernel: Kernel::Triangular },
            ],
            noise_variance: 0.5,
        }
    }
}

impl ToolSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.doi > 0.0 && self.doi.is_finite()) {
            return Err(Error::arg("doi must be positive"));
        }
        if self.channels.is_empty() {
            return Err(Error::arg("tool needs at least one channel"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::arg("noise_variance must be non-negative"));
        }
        Ok(())
    }
}

/// Channel readings at one station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub station: (f64, f64),
    pub values: Vec<f64>,
}

/// Noise-free tool response of `model` at `station = (x, z)`.
pub fn simulate(model: &EarthRealization, station: (f64, f64), tool: &ToolSpec) -> Result<MeasurementVector> {
    let (x, z) = station;
    model.check_x(x)?;
    let mut depths = vec![0.0; model.boundary_count()];
    model.boundaries_at_into(x, &mut depths);
    let values = tool
        .channels
        .iter()
        .map(|ch| channel_value(&depths, &model.layer_resistivities, z, ch, tool.doi))
        .collect();
    Ok(MeasurementVector { station, values })
}

fn channel_value(depths: &[f64], resistivities: &[f64], z: f64, ch: &Channel, doi: f64) -> f64 {
    let ds = doi / QUADRATURE_INTERVALS as f64;
    let sign = ch.direction.sign();
    // Distances along the channel at which a boundary is crossed, ascending.
    let mut cuts: Vec<f64> = depths
        .iter()
        .map(|d| sign * (d - z))
        .filter(|&s| s > 0.0 && s < doi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut next_cut = 0;
    let mut acc = 0.0;
    for i in 0..QUADRATURE_INTERVALS {
        let mut a = i as f64 * ds;
        let b = a + ds;
        while next_cut < cuts.len() && cuts[next_cut] < b {
            let c = cuts[next_cut];
            acc += piece(depths, resistivities, z, sign, ch, doi, a, c);
            a = c;
            next_cut += 1;
        }
        acc += piece(depths, resistivities, z, sign, ch, doi, a, b);
    }
    acc
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn piece(depths: &[f64], res: &[f64], z: f64, sign: f64, ch: &Channel, doi: f64, a: f64, b: f64) -> f64 {
    let s = 0.5 * (a + b);
    (b - a) * ch.kernel.weight(s, doi) * res[layer_index(depths, z + sign * s)]
}

/// Tool response of the truth plus independent Gaussian noise per channel.
pub fn observe(
    truth: &EarthRealization,
    station: (f64, f64),
    tool: &ToolSpec,
    seed: u64,
) -> Result<MeasurementVector> {
    let mut m = simulate(truth, station, tool)?;
    if tool.noise_variance > 0.0 {
        let noise = Normal::new(0.0, tool.noise_variance.sqrt())
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let mut rng = seeds::rng(seed);
        for v in m.values.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(m)
}

/// Writes a measurement log as CSV with columns `x, z, channel_<dir>...`.
pub fn write_measurement_csv<W: std::io::Write>(
    out: W,
    tool: &ToolSpec,
    log: &[MeasurementVector],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string(), "z".to_string()];
    header.extend(tool.channels.iter().map(|c| format!("channel_{}", c.direction.name())));
    w.write_record(&header)?;
    for m in log {
        let mut row = vec![m.station.0.to_string(), m.station.1.to_string()];
        row.extend(m.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomodel::GeostatParams;

    fn mean() -> EarthRealization {
        GeostatParams::default().mean_model()
    }

    /// Independent fine-quadrature evaluation through the public resistivity query.
    fn oracle(model: &EarthRealization, x: f64, z: f64, dir: Direction, doi: f64) -> f64 {
        let n = 10_000;
        let ds = doi / n as f64;
        (0..n)
            .map(|i| {
                let s = (i as f64 + 0.5) * ds;
                let rho = model.resistivity_at(x, z + dir.sign() * s).unwrap();
                2.0 * (doi - s) / (doi * doi) * rho * ds
            })
            .sum()
    }

    #[test]
    fn homogeneous_reads_exactly() {
        let mut m = mean();
        m.layer_resistivities = vec![10.0; 5];
        let r = simulate(&m, (100.0, -3.0), &ToolSpec::default()).unwrap();
        for v in r.values {
            assert!((v - 10.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mixture_matches_fine_quadrature() {
        let m = mean();
        let tool = ToolSpec::default();
        for z in [-2.65, -9.3, 2.0, -12.0, -17.0] {
            let r = simulate(&m, (120.0, z), &tool).unwrap();
            let up = oracle(&m, 120.0, z, Direction::Up, 5.0);
            let down = oracle(&m, 120.0, z, Direction::Down, 5.0);
            assert!((r.values[0] - up).abs() / up < 1e-3, "up at {z}: {} vs {up}", r.values[0]);
            assert!((r.values[1] - down).abs() / down < 1e-3, "down at {z}: {} vs {down}", r.values[1]);
        }
    }

    #[test]
    fn mid_shale_sees_both_sands() {
        let r = simulate(&mean(), (100.0, -9.3), &ToolSpec::default()).unwrap();
        let (up, down) = (r.values[0], r.values[1]);
        assert!(up > 10.0 && down > 10.0);
        assert!(down > up);
    }

    #[test]
    fn zero_noise_observation_is_simulation() {
        let tool = ToolSpec { noise_variance: 0.0, ..Default::default() };
        let m = mean();
        assert_eq!(observe(&m, (10.0, -1.0), &tool, 4).unwrap(), simulate(&m, (10.0, -1.0), &tool).unwrap());
    }

    #[test]
    fn outside_extent_rejected() {
        assert!(matches!(
            simulate(&mean(), (-100.0, 0.0), &ToolSpec::default()),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn response_is_monotone_in_layer_resistivity() {
        let tool = ToolSpec::default();
        let base = mean();
        let r0 = simulate(&base, (100.0, -2.0), &tool).unwrap();
        let mut brighter = base.clone();
        brighter.layer_resistivities[1] += 1.0;
        let r1 = simulate(&brighter, (100.0, -2.0), &tool).unwrap();
        assert!(r1.values[0] > r0.values[0] && r1.values[1] > r0.values[1]);
    }

    #[test]
    fn boundaries_beyond_doi_do_not_matter() {
        let tool = ToolSpec::default();
        let base = mean();
        let mut moved = base.clone();
        for v in moved.boundary_depths[3].iter_mut() {
            *v -= 2.0;
        }
        // Station at z = 1: the bottom boundaries are far outside the 5 m window.
        assert_eq!(simulate(&base, (60.0, 1.0), &tool).unwrap(), simulate(&moved, (60.0, 1.0), &tool).unwrap());
    }

    #[test]
    fn csv_log_columns() {
        let tool = ToolSpec::default();
        let log = vec![simulate(&mean(), (0.0, 15.0), &tool).unwrap()];
        let mut buf = Vec::new();
        write_measurement_csv(&mut buf, &tool, &log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,z,channel_up,channel_down\n"));
    }
}
