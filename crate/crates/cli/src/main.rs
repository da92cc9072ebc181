use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use geodss_core::harness::{paired_delta, BenchResult};
use geodss_core::steering::SessionConfig;
use geodss_core::{run_bench, run_scenario, Error, Preset};
use geodss_service::AppState;

const EXIT_ARGUMENT: u8 = 2;
const EXIT_UNDEFINED: u8 = 3;
/// Largest tolerated share of cases whose theoretical maximum is zero.
const UNDEFINED_LIMIT: f64 = 0.10;

#[derive(Parser)]
#[command(name = "geodss", version, about = "Ensemble-based geosteering decision support")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs seeded synthetic cases and writes per-case metrics.
    Bench {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 100)]
        ensemble: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Also run the same cases at this discount factor and report the paired difference.
        #[arg(long)]
        compare_gamma: Option<f64>,
        /// CSV for the comparison run; defaults to `<out>` with the gamma appended.
        #[arg(long, requires = "compare_gamma")]
        compare_out: Option<PathBuf>,
    },
    /// Replays a scripted case and writes its report and per-step frames.
    Scenario {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        ensemble: usize,
    },
    /// Serves sessions over HTTP.
    Serve {
        #[arg(long, env = "GEODSS_PORT", default_value_t = geodss_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory for session snapshots; sessions found there are restored at startup.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let argument = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Argument(_))));
            ExitCode::from(if argument { EXIT_ARGUMENT } else { 1 })
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Bench { cases, ensemble, gamma, seed, out, json, compare_gamma, compare_out } => {
            if cases == 0 {
                return Err(Error::Argument("--cases must be positive".into()).into());
            }
            let base = SessionConfig { ensemble_size: ensemble, ..Default::default() };
            let result = run_bench(cases, &base, gamma, seed)?;
            write_bench(&result, &out, json.as_deref())?;
            summarize(&result);
            let mut undefined = result.aggregate.undefined_cases;
            if let Some(g2) = compare_gamma {
                let other = run_bench(cases, &base, g2, seed)?;
                let path = compare_out.unwrap_or_else(|| suffixed(&out, g2));
                write_bench(&other, &path, None)?;
                summarize(&other);
                let d = paired_delta(&result, &other)?;
                println!(
                    "paired delta (gamma {g2} - gamma {gamma}): {:+.2} points over {} cases, {} improved, {} degraded",
                    d.mean_delta, d.cases, d.improved, d.degraded
                );
                undefined = undefined.max(other.aggregate.undefined_cases);
            }
            if undefined as f64 > UNDEFINED_LIMIT * cases as f64 {
                eprintln!("{undefined} of {cases} cases have no positive theoretical maximum");
                return Ok(ExitCode::from(EXIT_UNDEFINED));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario { preset, out, ensemble } => {
            let preset = Preset::load(&preset)?;
            let base = SessionConfig { ensemble_size: ensemble, ..Default::default() };
            let report = run_scenario(&preset, &base)?;
            report.write_to(&out).with_context(|| format!("writing {}", out.display()))?;
            let m = &report.metrics;
            println!(
                "{}: achieved {:.3} of {:.3} ({}), landed {}, optimal {}",
                report.preset,
                m.achieved_value,
                m.theoretical_max,
                m.relative.map_or("undefined".to_string(), |r| format!("{r:.1}%")),
                m.landed_layer.name(),
                m.optimal_layer.name()
            );
            if let Some(sw) = report.switch {
                println!(
                    "weights switched at step {}: value CDF mean {:.3} -> {:.3}",
                    sw.step, sw.cdf_mean_before, sw.cdf_mean_after
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { port, host, snapshots } => {
            let state = match snapshots {
                Some(dir) => AppState::with_snapshot_dir(dir),
                None => AppState::new(),
            };
            let restored = state.load_snapshots()?;
            if restored > 0 {
                println!("restored {restored} sessions");
            }
            let addr = SocketAddr::new(host, port);
            println!("listening on http://{addr}");
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(geodss_service::serve(addr, Arc::new(state)))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn suffixed(path: &Path, gamma: f64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    path.with_file_name(format!("{stem}_gamma{gamma}.csv"))
}

fn write_bench(result: &BenchResult, csv: &Path, json: Option<&Path>) -> anyhow::Result<()> {
    let f = File::create(csv).with_context(|| format!("creating {}", csv.display()))?;
    result.write_csv(BufWriter::new(f))?;
    if let Some(json) = json {
        let f = File::create(json).with_context(|| format!("creating {}", json.display()))?;
        result.write_json(BufWriter::new(f))?;
    }
    Ok(())
}

fn summarize(r: &BenchResult) {
    let a = &r.aggregate;
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.1}%"));
    println!(
        "gamma {}: {} cases ({} undefined), mean relative value {}, landing optimal {}",
        r.gamma,
        a.cases,
        a.undefined_cases,
        pct(a.mean_relative),
        pct(a.landing_optimal_rate)
    );
    println!("histogram (10% bins): {:?}", a.histogram);
}
