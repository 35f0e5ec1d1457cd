//! `bathyloc`: lake generation, single runs and Monte Carlo benchmarks.

mod config;
mod error;
mod output;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bathyloc_core::sim::run_replicate;
use bathyloc_core::{FilterKind, LakeProfile, SyntheticLakeSpec};
use clap::{Args, Parser, Subcommand};

use crate::config::{CliConfig, Format};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "bathyloc",
    version,
    about = "Bathymetry-aided AUV localization benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic lake as an ESRI ASCII grid.
    GenLake(GenLakeArgs),
    /// Run one replicate and write its trajectory and per-filter reports.
    Run(RunArgs),
    /// Run the Monte Carlo benchmark and write aggregate and per-run results.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenLakeArgs {
    /// JSON lake specification; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_profile)]
    profile: Option<LakeProfile>,
    #[arg(long)]
    ncols: Option<usize>,
    #[arg(long)]
    nrows: Option<usize>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    max_height: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    asymmetry: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    noise: Option<f64>,
    #[arg(long)]
    noise_periods: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the outer ring of cells instead of zeroing it.
    #[arg(long)]
    no_shoreline: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "lake.asc")]
    name: String,
}

#[derive(Args)]
struct Common {
    /// Benchmark configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated output formats.
    #[arg(long, value_delimiter = ',', value_parser = parse_format)]
    format: Option<Vec<Format>>,
    /// Comma-separated filters to run; overrides the configuration.
    #[arg(long, value_delimiter = ',', value_parser = parse_filter)]
    filters: Option<Vec<FilterKind>>,
    /// Simulate truth without process noise.
    #[arg(long)]
    no_process_noise: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Replicate index to run.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Override the number of replicates.
    #[arg(long)]
    runs: Option<usize>,
}

fn parse_profile(s: &str) -> Result<LakeProfile, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown profile {s:?} (bowl, tilted-plane, ridge, twin-basin)"))
}

fn parse_format(s: &str) -> Result<Format, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| format!("unknown format {s:?} (csv, json)"))
}

fn parse_filter(s: &str) -> Result<FilterKind, String> {
    FilterKind::ALL
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown filter {s:?} (ekf, ukf, pf, mpf)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenLake(a) => gen_lake(a),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bathyloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn gen_lake(a: GenLakeArgs) -> Result<(), CliError> {
    let mut spec = match &a.config {
        Some(path) => config::load_lake_spec(path)?,
        None => {
            let profile = a
                .profile
                .ok_or_else(|| CliError::Config("--profile is required".into()))?;
            let ncols = a
                .ncols
                .ok_or_else(|| CliError::Config("--ncols is required".into()))?;
            let nrows = a
                .nrows
                .ok_or_else(|| CliError::Config("--nrows is required".into()))?;
            let max_height = a
                .max_height
                .ok_or_else(|| CliError::Config("--max-height is required".into()))?;
            SyntheticLakeSpec::new(ncols, nrows, profile, max_height)
        }
    };
    if let Some(v) = a.profile {
        spec.profile = v;
    }
    if let Some(v) = a.ncols {
        spec.ncols = v;
    }
    if let Some(v) = a.nrows {
        spec.nrows = v;
    }
    if let Some(v) = a.cell_size {
        spec.cell_size = v;
    }
    if let Some(v) = a.max_height {
        spec.max_height = v;
    }
    if let Some(v) = a.asymmetry {
        spec.asymmetry = v;
    }
    if let Some(v) = a.noise {
        spec.noise_amplitude = v;
    }
    if let Some(v) = a.noise_periods {
        spec.noise_periods = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if a.no_shoreline {
        spec.shoreline = false;
    }
    spec.validate()?;
    let grid = spec.generate::<f64>()?;
    create_dir(&a.out)?;
    let path = a.out.join(&a.name);
    fs::write(&path, grid.to_esri_ascii())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    let (lo, hi) = grid.height_range().unwrap_or((f64::NAN, f64::NAN));
    let (x0, x1, y0, y1) = grid.interpolable_extent();
    println!("wrote {}", path.display());
    println!(
        "  {} × {} cells of {} m, profile {}",
        grid.ncols(),
        grid.nrows(),
        grid.cell_size(),
        spec.profile.name()
    );
    println!("  height min {lo:.3} m, max {hi:.3} m");
    println!("  bounds x [{x0}, {x1}], y [{y0}, {y1}]");
    Ok(())
}

/// Loads the configuration and applies command-line overrides.
fn prepare(c: &Common) -> Result<(CliConfig, PathBuf, Vec<Format>), CliError> {
    let mut cfg = config::load_benchmark(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.benchmark.master_seed = seed;
    }
    if let Some(f) = &c.filters {
        cfg.benchmark.filters = f.clone();
    }
    if c.no_process_noise {
        cfg.benchmark.process_noise = false;
    }
    if c.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(|d| cfg.base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from("."));
    let formats = c
        .format
        .clone()
        .or_else(|| cfg.output.format.clone())
        .unwrap_or_else(|| vec![Format::Csv, Format::Json]);
    cfg.benchmark.validate()?;
    create_dir(&out)?;
    Ok((cfg, out, formats))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let (cfg, out, formats) = prepare(&a.common)?;
    if a.replicate >= cfg.benchmark.runs as u64 {
        return Err(CliError::Config(format!(
            "--replicate {} is out of range for {} runs",
            a.replicate, cfg.benchmark.runs
        )));
    }
    let grid = cfg.load_grid()?;
    let bench = &cfg.benchmark;
    let rep = run_replicate(bench, &grid, a.replicate)?;
    if formats.contains(&Format::Csv) {
        output::write_trajectory(&out.join("trajectory.csv"), &rep, bench.dt)?;
    }
    if formats.contains(&Format::Json) {
        output::write_run_json(&out.join("run.json"), bench, &rep)?;
    }
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "{} replicate {} ({} steps)",
        bench.name,
        rep.index,
        rep.truth.len()
    )?;
    for r in &rep.reports {
        writeln!(
            stdout,
            "{:<5} rmse x {:.3} y {:.3} z {:.3}{}",
            r.filter.name(),
            r.rmse_x,
            r.rmse_y,
            r.rmse_z,
            if r.diverged { "  diverged" } else { "" }
        )?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let (mut cfg, out, formats) = prepare(&a.common)?;
    if let Some(runs) = a.runs {
        cfg.benchmark.runs = runs;
        cfg.benchmark.validate()?;
    }
    let grid = cfg.load_grid()?;
    let bench = &cfg.benchmark;
    let start = Instant::now();
    let agg = bathyloc_core::sim::monte_carlo(bench, &grid, a.common.workers)?;
    let wall = start.elapsed().as_secs_f64();
    if formats.contains(&Format::Json) {
        output::write_json(&out.join("aggregate.json"), &agg)?;
    }
    if formats.contains(&Format::Csv) {
        output::write_runs_csv(&out.join("runs.csv"), &agg)?;
        output::write_summary_csv(&out.join("summary.csv"), &agg)?;
    }
    output::write_timing(&out.join("timing.json"), &agg, wall, a.common.workers)?;
    output::print_table(&mut io::stdout().lock(), &agg)?;
    Ok(())
}
