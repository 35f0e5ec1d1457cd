//! CSV and JSON writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use bathyloc_core::sim::{Replicate, REPORT_VERSION};
use bathyloc_core::{AggregateReport, BenchmarkConfig, RunReport, State};
use serde::Serialize;

use crate::error::CliError;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(file))
}

fn num(v: f64) -> String {
    let mut b = ryu_like(v);
    if b == "-0" {
        b = "0".into();
    }
    b
}

/// Shortest round-trip decimal, as `serde_json` prints it.
fn ryu_like(v: f64) -> String {
    if v.is_finite() {
        serde_json::Number::from_f64(v)
            .map(|n| n.to_string())
            .unwrap_or_default()
    } else {
        String::new()
    }
}

/// Per-step truth, measurements and estimates for every filter.
pub fn write_trajectory(path: &Path, replicate: &Replicate, dt: f64) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["t", "truth_x", "truth_y", "truth_z", "depth", "altitude"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for r in &replicate.reports {
        let tag = r.filter.name().to_lowercase();
        for axis in ["x", "y", "z"] {
            header.push(format!("{tag}_{axis}"));
        }
        if r.filter.is_particle() {
            header.push(format!("{tag}_ess"));
        }
    }
    w.write_record(&header)?;
    let truth = &replicate.truth;
    for t in 0..truth.len() {
        let s = truth.states[t];
        let z = truth.measurements[t];
        let mut row = vec![
            num(t as f64 * dt),
            num(s.px),
            num(s.py),
            num(s.pz),
            num(z.depth),
            num(z.altitude),
        ];
        for r in &replicate.reports {
            let e: State<f64> = r.estimates[t];
            row.extend([num(e.px), num(e.py), num(e.pz)]);
            if r.filter.is_particle() {
                row.push(r.ess.get(t).map_or_else(String::new, |&v| num(v)));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TruthSummary<'a> {
    seed: u64,
    steps: usize,
    truncated: bool,
    clamped_steps: usize,
    states: &'a [State<f64>],
}

#[derive(Serialize)]
struct RunDocument<'a> {
    report_version: u32,
    name: &'a str,
    lake: String,
    motion: &'a str,
    replicate: u64,
    master_seed: u64,
    truth: TruthSummary<'a>,
    reports: &'a [RunReport],
}

pub fn write_run_json(
    path: &Path,
    cfg: &BenchmarkConfig,
    replicate: &Replicate,
) -> Result<(), CliError> {
    let doc = RunDocument {
        report_version: REPORT_VERSION,
        name: &cfg.name,
        lake: cfg.lake.label(),
        motion: cfg.motion.label(),
        replicate: replicate.index,
        master_seed: cfg.master_seed,
        truth: TruthSummary {
            seed: replicate.truth.seed,
            steps: replicate.truth.len(),
            truncated: replicate.truth.truncated,
            clamped_steps: replicate.truth.clamped_steps,
            states: &replicate.truth.states,
        },
        reports: &replicate.reports,
    };
    write_json(path, &doc)
}

/// One row per (replicate, filter).
pub fn write_runs_csv(path: &Path, agg: &AggregateReport) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "filter",
        "replicate",
        "seed",
        "steps",
        "rmse_x",
        "rmse_y",
        "rmse_z",
        "rmse_horizontal",
        "diverged",
        "degenerate_steps",
        "truth_truncated",
        "truth_clamped_steps",
    ])?;
    for r in &agg.records {
        w.write_record([
            r.filter.name().to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.steps.to_string(),
            num(r.rmse_x),
            num(r.rmse_y),
            num(r.rmse_z),
            num(r.rmse_x.hypot(r.rmse_y)),
            r.diverged.to_string(),
            r.degenerate_steps.to_string(),
            r.truth_truncated.to_string(),
            r.truth_clamped_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per filter with mean and standard deviation of each RMSE.
pub fn write_summary_csv(path: &Path, agg: &AggregateReport) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "lake",
        "motion",
        "filter",
        "runs",
        "rmse_x_mean",
        "rmse_x_std",
        "rmse_y_mean",
        "rmse_y_std",
        "rmse_z_mean",
        "rmse_z_std",
        "rmse_horizontal_mean",
        "rmse_horizontal_std",
        "divergences",
        "truncated_runs",
    ])?;
    for s in &agg.filters {
        w.write_record([
            agg.lake.clone(),
            agg.motion.clone(),
            s.filter.name().to_string(),
            s.runs.to_string(),
            num(s.rmse_x.mean),
            num(s.rmse_x.std),
            num(s.rmse_y.mean),
            num(s.rmse_y.std),
            num(s.rmse_z.mean),
            num(s.rmse_z.std),
            num(s.rmse_horizontal.mean),
            num(s.rmse_horizontal.std),
            s.divergences.to_string(),
            s.truncated_runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FilterTiming {
    filter: &'static str,
    runs: usize,
    mean_s: f64,
    std_s: f64,
    min_s: f64,
    max_s: f64,
    total_s: f64,
}

#[derive(Serialize)]
struct Timing {
    wall_s: f64,
    workers: Option<usize>,
    filters: Vec<FilterTiming>,
}

/// Wall-clock timings, kept apart from the reproducible reports.
pub fn write_timing(
    path: &Path,
    agg: &AggregateReport,
    wall_s: f64,
    workers: Option<usize>,
) -> Result<(), CliError> {
    let filters = agg
        .filters
        .iter()
        .map(|s| {
            let rt = s.runtime.unwrap_or(bathyloc_core::Stats::from_values(&[]));
            FilterTiming {
                filter: s.filter.name(),
                runs: s.runs,
                mean_s: rt.mean,
                std_s: rt.std,
                min_s: rt.min,
                max_s: rt.max,
                total_s: s.runtime_total,
            }
        })
        .collect();
    write_json(
        path,
        &Timing {
            wall_s,
            workers,
            filters,
        },
    )
}

pub fn print_table(out: &mut impl Write, agg: &AggregateReport) -> std::io::Result<()> {
    writeln!(
        out,
        "{} ({} lake, {} motion, {} runs × {} steps)",
        agg.name, agg.lake, agg.motion, agg.runs, agg.steps
    )?;
    writeln!(
        out,
        "{:<5} {:>12} {:>12} {:>12} {:>12} {:>6}",
        "", "rmse_x", "rmse_y", "rmse_z", "horizontal", "div"
    )?;
    for s in &agg.filters {
        writeln!(
            out,
            "{:<5} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>6}",
            s.filter.name(),
            s.rmse_x.mean,
            s.rmse_y.mean,
            s.rmse_z.mean,
            s.rmse_horizontal.mean,
            s.divergences
        )?;
    }
    Ok(())
}
