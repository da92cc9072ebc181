//! Seeded statistical benchmark over many synthetic cases.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::MIXING_FUNCTION;
use crate::steering::{CaseMetrics, Landing, SessionConfig, SessionSeeds, Status, SteeringSession};

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case: usize,
    pub seeds: SessionSeeds,
    pub status: Status,
    pub stands: usize,
    pub metrics: CaseMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LandingCounts {
    pub top: usize,
    pub bottom: usize,
    pub none: usize,
    pub optimal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub cases: usize,
    pub defined_cases: usize,
    pub undefined_cases: usize,
    /// Mean relative value over defined cases, percent.
    pub mean_relative: Option<f64>,
    /// Share of defined cases that landed in the truth-optimal layer, percent.
    pub landing_optimal_rate: Option<f64>,
    /// Defined cases per relative-value bin `[0,10), ..., [90,100]`; values
    /// outside `[0, 100]` fall into the end bins.
    pub histogram: [usize; HISTOGRAM_BINS],
    pub landing_by_bin: [LandingCounts; HISTOGRAM_BINS],
    pub min_relative: Option<f64>,
    pub max_relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub master_seed: u64,
    pub gamma: f64,
    pub ensemble_size: usize,
    pub mixing_function: String,
    pub rows: Vec<CaseRow>,
    pub aggregate: Aggregates,
}

pub fn bin_of(relative: f64) -> usize {
    ((relative / 10.0).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn aggregate(rows: &[CaseRow]) -> Aggregates {
    let mut histogram = [0; HISTOGRAM_BINS];
    let mut landing_by_bin = [LandingCounts::default(); HISTOGRAM_BINS];
    let (mut sum, mut defined, mut optimal) = (0.0, 0, 0);
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    for row in rows {
        let Some(r) = row.metrics.relative else { continue };
        defined += 1;
        sum += r;
        lo = Some(lo.map_or(r, |v| v.min(r)));
        hi = Some(hi.map_or(r, |v| v.max(r)));
        let b = bin_of(r);
        histogram[b] += 1;
        let counts = &mut landing_by_bin[b];
        match row.metrics.landed_layer {
            Landing::Top => counts.top += 1,
            Landing::Bottom => counts.bottom += 1,
            Landing::None => counts.none += 1,
        }
        if row.metrics.landing_optimal {
            counts.optimal += 1;
            optimal += 1;
        }
    }
    let pct = |n: usize| (defined > 0).then(|| 100.0 * n as f64 / defined as f64);
    Aggregates {
        cases: rows.len(),
        defined_cases: defined,
        undefined_cases: rows.len() - defined,
        mean_relative: (defined > 0).then(|| sum / defined as f64),
        landing_optimal_rate: pct(optimal),
        histogram,
        landing_by_bin,
        min_relative: lo,
        max_relative: hi,
    }
}

/// Runs one fully automatic case.
pub fn run_case(base: &SessionConfig, seeds: SessionSeeds) -> Result<(Status, usize, CaseMetrics)> {
    let mut s = SteeringSession::create(SessionConfig { seeds, ..base.clone() })?;
    s.run_to_end()?;
    Ok((s.status(), s.drilled().len() - 1, s.evaluate()?))
}

/// Runs `cases` automatic cases; case `i` draws its seeds from `(seed, i)`.
pub fn run_bench(cases: usize, base: &SessionConfig, gamma: f64, seed: u64) -> Result<BenchResult> {
    if cases == 0 {
        return Err(Error::arg("at least one case is required"));
    }
    let config = SessionConfig { gamma, ..base.clone() };
    config.validate()?;
    let rows: Vec<CaseRow> = (0..cases)
        .into_par_iter()
        .map(|case| {
            let seeds = SessionSeeds::for_case(seed, case as u64);
            let (status, stands, metrics) = run_case(&config, seeds)?;
            Ok(CaseRow { case, seeds, status, stands, metrics })
        })
        .collect::<Result<_>>()?;
    let aggregate = aggregate(&rows);
    Ok(BenchResult {
        master_seed: seed,
        gamma,
        ensemble_size: config.ensemble_size,
        mixing_function: MIXING_FUNCTION.to_string(),
        rows,
        aggregate,
    })
}

const CSV_COLUMNS: [&str; 13] = [
    "case",
    "seed_ensemble",
    "seed_truth",
    "seed_noise",
    "status",
    "stands",
    "achieved_value",
    "theoretical_max",
    "relative",
    "landed_layer",
    "optimal_layer",
    "landing_optimal",
    "stands_in_target",
];

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Drilling => "drilling",
        Status::Stopped => "stopped",
        Status::Completed => "completed",
    }
}

fn parse_status(s: &str) -> Result<Status> {
    Ok(match s {
        "drilling" => Status::Drilling,
        "stopped" => Status::Stopped,
        "completed" => Status::Completed,
        _ => return Err(Error::arg(format!("unknown status {s:?}"))),
    })
}

fn parse_landing(s: &str) -> Result<Landing> {
    Ok(match s {
        "top" => Landing::Top,
        "bottom" => Landing::Bottom,
        "none" => Landing::None,
        _ => return Err(Error::arg(format!("unknown layer {s:?}"))),
    })
}

impl BenchResult {
    /// Per-case table preceded by `#` comment lines recording the run parameters.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# geodss bench cases={} ensemble={} gamma={} seed={}",
            self.rows.len(),
            self.ensemble_size,
            self.gamma,
            self.master_seed
        )?;
        writeln!(out, "# case seeds: case=mix(seed, index); ensemble/truth/noise=mix(case, 1/2/3); mix={}", self.mixing_function)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                r.case.to_string(),
                r.seeds.ensemble.to_string(),
                r.seeds.truth.to_string(),
                r.seeds.noise.to_string(),
                status_name(r.status).to_string(),
                r.stands.to_string(),
                m.achieved_value.to_string(),
                m.theoretical_max.to_string(),
                m.relative.map(|v| v.to_string()).unwrap_or_default(),
                m.landed_layer.name().to_string(),
                m.optimal_layer.name().to_string(),
                m.landing_optimal.to_string(),
                m.stands_in_target.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Reads the per-case rows back from [`BenchResult::write_csv`] output.
pub fn read_csv_rows<R: BufRead>(input: R) -> Result<Vec<CaseRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).ok_or_else(|| Error::arg("short CSV row"));
        let num = |i: usize| -> Result<f64> { f(i)?.parse().map_err(|_| Error::arg(format!("bad number in column {i}"))) };
        let int = |i: usize| -> Result<u64> { f(i)?.parse().map_err(|_| Error::arg(format!("bad integer in column {i}"))) };
        let relative = match f(8)? {
            "" => None,
            _ => Some(num(8)?),
        };
        rows.push(CaseRow {
            case: int(0)? as usize,
            seeds: SessionSeeds { ensemble: int(1)?, truth: int(2)?, noise: int(3)? },
            status: parse_status(f(4)?)?,
            stands: int(5)? as usize,
            metrics: CaseMetrics {
                achieved_value: num(6)?,
                theoretical_max: num(7)?,
                relative,
                landed_layer: parse_landing(f(9)?)?,
                optimal_layer: parse_landing(f(10)?)?,
                landing_optimal: f(11)? == "true",
                stands_in_target: int(12)? as usize,
            },
        });
    }
    Ok(rows)
}

/// Mean change in relative value between two runs over the cases defined in both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub cases: usize,
    pub mean_delta: f64,
    pub improved: usize,
    pub degraded: usize,
}

pub fn paired_delta(baseline: &BenchResult, other: &BenchResult) -> Result<PairedDelta> {
    if baseline.rows.len() != other.rows.len() || baseline.master_seed != other.master_seed {
        return Err(Error::arg("paired runs must share cases and seed"));
    }
    let (mut n, mut sum, mut improved, mut degraded) = (0, 0.0, 0, 0);
    for (a, b) in baseline.rows.iter().zip(&other.rows) {
        if let (Some(x), Some(y)) = (a.metrics.relative, b.metrics.relative) {
            n += 1;
            sum += y - x;
            improved += usize::from(y > x);
            degraded += usize::from(y < x);
        }
    }
    Ok(PairedDelta { cases: n, mean_delta: if n > 0 { sum / n as f64 } else { 0.0 }, improved, degraded })
}
