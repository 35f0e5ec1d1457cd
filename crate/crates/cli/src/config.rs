//! Loading and validating configuration documents.

use std::fs;
use std::path::{Path, PathBuf};

use bathyloc_core::{BathymetryGrid, BenchmarkConfig, LakeSource, SyntheticLakeSpec};
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;

pub const CONFIG_SCHEMA: &str = include_str!("../../../schemas/config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub format: Option<Vec<Format>>,
}

/// A benchmark configuration plus where and how to write results.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub benchmark: BenchmarkConfig,
    pub output: OutputSpec,
    /// Directory lake file paths are resolved against.
    pub base_dir: PathBuf,
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{} is not valid JSON: {e}", path.display())))
}

fn schema() -> Value {
    serde_json::from_str(CONFIG_SCHEMA).expect("bundled schema is valid JSON")
}

/// Checks `doc` against the definition `def` of the bundled schema, or the
/// whole schema when `def` is `None`.
fn check(doc: &Value, def: Option<&str>, path: &Path) -> Result<(), CliError> {
    let mut schema = schema();
    if let Some(def) = def {
        let defs = schema["$defs"].clone();
        schema = serde_json::json!({
            "$schema": schema["$schema"].clone(),
            "$defs": defs,
            "$ref": format!("#/$defs/{def}"),
        });
    }
    let validator = jsonschema::validator_for(&schema).expect("bundled schema compiles");
    let problems: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| {
            let at = e.instance_path().to_string();
            if at.is_empty() {
                e.to_string()
            } else {
                format!("{at}: {e}")
            }
        })
        .collect();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{} does not match the configuration schema:\n  {}",
            path.display(),
            problems.join("\n  ")
        )))
    }
}

pub fn load_benchmark(path: &Path) -> Result<CliConfig, CliError> {
    let mut doc = read_json(path)?;
    check(&doc, None, path)?;
    let output = match doc.as_object_mut().and_then(|m| m.remove("output")) {
        Some(v) => {
            serde_json::from_value(v).map_err(|e| CliError::Config(format!("output: {e}")))?
        }
        None => OutputSpec::default(),
    };
    let benchmark: BenchmarkConfig = serde_json::from_value(doc)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    benchmark.validate()?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(CliConfig {
        benchmark,
        output,
        base_dir,
    })
}

pub fn load_lake_spec(path: &Path) -> Result<SyntheticLakeSpec, CliError> {
    let doc = read_json(path)?;
    check(&doc, Some("synthetic_lake"), path)?;
    let spec: SyntheticLakeSpec = serde_json::from_value(doc)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

impl CliConfig {
    pub fn load_grid(&self) -> Result<BathymetryGrid<f64>, CliError> {
        match &self.benchmark.lake {
            LakeSource::Synthetic(spec) => Ok(spec.generate()?),
            LakeSource::File(file) => {
                let path = self.base_dir.join(file);
                let f = fs::File::open(&path).map_err(|e| {
                    CliError::Config(format!("cannot open lake {}: {e}", path.display()))
                })?;
                BathymetryGrid::read_esri_ascii(f)
                    .map_err(|e| CliError::Config(format!("lake {}: {e}", path.display())))
            }
        }
    }
}
