use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bathyloc_core::BathymetryGrid;
use serde_json::Value;

const MEAN_TOL: f64 = 1e-12;
const ZERO_RMSE_TOL: f64 = 1e-4;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bathyloc"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{
    "name": "small",
    "lake": {"synthetic": {"ncols": 120, "nrows": 120, "profile": "twin-basin", "max_height": 25.0,
                           "asymmetry": 0.4, "noise_amplitude": 0.5, "seed": 1}},
    "motion": {"linear": {"vx": 0.5, "vy": -0.4, "vz": -0.02}},
    "init_pose": {"px": 60.0, "py": 60.0, "pz": 5.0},
    "steps": 15,
    "runs": 2,
    "filters": ["EKF", "MPF"],
    "pf": {"particles": 200},
    "mpf": {"particles": 80},
    "master_seed": 9
}"#;

fn schema_errors(schema: &str, doc: &Value) -> Vec<String> {
    let schema: Value = serde_json::from_str(&fs::read_to_string(repo(schema)).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    v.iter_errors(doc)
        .map(|e| format!("{}: {e}", e.instance_path()))
        .collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn gen_lake(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "gen-lake",
        "--profile",
        "bowl",
        "--ncols",
        "200",
        "--nrows",
        "200",
        "--max-height",
        "27",
        "--seed",
        "7",
    ];
    args.extend_from_slice(extra);
    bin().args(&args).arg("--out").arg(dir).output().unwrap()
}

#[test]
fn gen_lake_round_trips_and_is_deterministic() {
    let dir = scratch("gen_lake");
    ok(gen_lake(&dir.join("a"), &[]));
    ok(gen_lake(&dir.join("b"), &[]));
    let a = fs::read_to_string(dir.join("a/lake.asc")).unwrap();
    let b = fs::read_to_string(dir.join("b/lake.asc")).unwrap();
    assert_eq!(a, b);
    let grid = BathymetryGrid::<f64>::from_esri_ascii(&a).unwrap();
    assert_eq!((grid.ncols(), grid.nrows()), (200, 200));
    assert_eq!(grid.to_esri_ascii(), a);
    let (_, hi) = grid.height_range().unwrap();
    assert!(hi <= 27.0);
}

#[test]
fn gen_lake_rejects_negative_max_height() {
    let dir = scratch("gen_lake_bad");
    let mut args = vec![
        "gen-lake",
        "--profile",
        "bowl",
        "--ncols",
        "200",
        "--nrows",
        "200",
        "--max-height",
        "-1",
    ];
    args.extend(["--seed", "7"]);
    let out = bin().args(&args).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("lake.asc").exists());
}

#[test]
fn malformed_and_unknown_keys_exit_with_config_error() {
    let dir = scratch("bad_config");
    let unknown = SMALL.replace("\"master_seed\": 9", "\"master_seed\": 9, \"colour\": 3");
    let cfg = write_config(&dir, &unknown);
    let out = bin()
        .args(["bench", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(&dir, "{ not json");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["run", "--config"])
        .arg(dir.join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lake_file_paths_resolve_against_the_config() {
    let dir = scratch("lake_file");
    ok(gen_lake(&dir, &["--name", "bowl.asc"]));
    let cfg = SMALL.replace(
        r#"{"synthetic": {"ncols": 120, "nrows": 120, "profile": "twin-basin", "max_height": 25.0,
                           "asymmetry": 0.4, "noise_amplitude": 0.5, "seed": 1}}"#,
        r#"{"file": "bowl.asc"}"#,
    );
    let cfg = cfg.replace("\"px\": 60.0, \"py\": 60.0", "\"px\": 100.0, \"py\": 100.0");
    let path = write_config(&dir, &cfg);
    ok(bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap());
    let doc = read_json(&dir.join("out/run.json"));
    assert_eq!(doc["lake"], "bowl.asc");
}

#[test]
fn ekf_only_run_has_one_estimate_triple() {
    let dir = scratch("ekf_only");
    let cfg = write_config(&dir, SMALL);
    ok(bin()
        .args(["run", "--filters", "ekf", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap());
    let mut rd = csv::Reader::from_path(dir.join("trajectory.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    let estimates: Vec<&String> = header.iter().filter(|h| h.starts_with("ekf_")).collect();
    assert_eq!(estimates, ["ekf_x", "ekf_y", "ekf_z"]);
    assert_eq!(header.len(), 6 + 3);
    assert_eq!(rd.records().count(), 15);
}

#[test]
fn particle_filters_report_ess_per_step() {
    let dir = scratch("ess");
    let cfg = write_config(&dir, SMALL);
    ok(bin()
        .args(["run", "--filters", "pf,mpf", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap());
    let mut rd = csv::Reader::from_path(dir.join("trajectory.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    for col in ["pf_ess", "mpf_ess"] {
        let idx = header.iter().position(|h| h == col).unwrap();
        for rec in rd.records() {
            let ess: f64 = rec.unwrap()[idx].parse().unwrap();
            assert!(ess >= 1.0 - 1e-9);
        }
        rd = csv::Reader::from_path(dir.join("trajectory.csv")).unwrap();
    }
}

#[test]
fn zero_noise_flat_lake_gives_zero_rmse() {
    let dir = scratch("zero_noise");
    let cfg = r#"{
        "name": "exact",
        "lake": {"synthetic": {"ncols": 100, "nrows": 100, "profile": "tilted-plane", "max_height": 20.0,
                               "asymmetry": 0.5, "seed": 0}},
        "motion": {"linear": {"vx": 0.3, "vy": 0.2, "vz": 0.0}},
        "noise": {"q_diag": [0.0, 0.0, 0.0], "r_diag": [1e-12, 1e-12]},
        "init_pose": {"px": 40.0, "py": 40.0, "pz": 5.0},
        "steps": 30,
        "runs": 1,
        "filters": ["EKF", "UKF"],
        "master_seed": 1
    }"#;
    let path = write_config(&dir, cfg);
    ok(bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap());
    let doc = read_json(&dir.join("run.json"));
    for r in doc["reports"].as_array().unwrap() {
        for k in ["rmse_x", "rmse_y", "rmse_z"] {
            let v = r[k].as_f64().unwrap();
            assert!(v <= ZERO_RMSE_TOL, "{} {k} = {v}", r["filter"]);
        }
    }
}

#[test]
fn bench_writes_one_row_per_run_and_filter() {
    let dir = scratch("bench_rows");
    let cfg = write_config(&dir, SMALL);
    ok(bin()
        .args(["bench", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap());
    let mut rd = csv::Reader::from_path(dir.join("runs.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);

    let agg = read_json(&dir.join("aggregate.json"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for summary in agg["filters"].as_array().unwrap() {
        let filter = summary["filter"].as_str().unwrap();
        let mine: Vec<&csv::StringRecord> = rows
            .iter()
            .filter(|r| &r[col("filter")] == filter)
            .collect();
        assert_eq!(mine.len(), 2);
        for key in ["rmse_x", "rmse_y", "rmse_z", "rmse_horizontal"] {
            let mean = mine
                .iter()
                .map(|r| r[col(key)].parse::<f64>().unwrap())
                .sum::<f64>()
                / mine.len() as f64;
            let reported = summary[key]["mean"].as_f64().unwrap();
            assert!(
                (mean - reported).abs() <= MEAN_TOL * mean.max(1.0),
                "{filter} {key}: {mean} vs {reported}"
            );
        }
        let div = mine
            .iter()
            .filter(|r| &r[col("diverged")] == "true")
            .count();
        assert_eq!(summary["divergences"].as_u64().unwrap() as usize, div);
    }
}

#[test]
fn outputs_match_published_schemas() {
    let dir = scratch("schemas");
    let cfg = write_config(&dir, SMALL);
    ok(bin()
        .args(["bench", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap());
    ok(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap());
    let agg = read_json(&dir.join("aggregate.json"));
    assert_eq!(agg["report_version"], 1);
    assert_eq!(
        schema_errors("schemas/aggregate.schema.json", &agg),
        Vec::<String>::new()
    );
    let run = read_json(&dir.join("run.json"));
    assert_eq!(run["report_version"], 1);
    assert_eq!(
        schema_errors("schemas/run.schema.json", &run),
        Vec::<String>::new()
    );
    let input: Value = serde_json::from_str(SMALL).unwrap();
    assert_eq!(
        schema_errors("schemas/config.schema.json", &input),
        Vec::<String>::new()
    );
}

#[test]
fn shipped_configs_validate() {
    let mut paths: Vec<PathBuf> = fs::read_dir(repo("configs/presets"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.push(repo("configs/trend_twin_basin.json"));
    paths.push(repo("configs/trend_bowl.json"));
    assert!(paths.len() >= 6);
    for p in paths {
        let doc = read_json(&p);
        assert_eq!(
            schema_errors("schemas/config.schema.json", &doc),
            Vec::<String>::new(),
            "{}",
            p.display()
        );
    }
}

#[test]
fn format_switch_limits_outputs() {
    let dir = scratch("formats");
    let cfg = write_config(&dir, SMALL);
    ok(bin()
        .args(["bench", "--format", "json", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap());
    assert!(dir.join("aggregate.json").exists());
    assert!(!dir.join("runs.csv").exists());
    let out = bin()
        .args(["bench", "--format", "xml", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
