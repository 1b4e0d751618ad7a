use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use faith_core::{
    fetch_predictions, join_predictions, load_audit_csv, load_candidates, marginal_heatmap, run_audit,
    select as select_candidates, AuditConfig, AuditSetup, CellPredictions, Heatmap, LossKind, ModelSource,
    PredictionRecord, PreparedAudit, SimulationSpec, SPEC_VERSION,
};

use crate::output::{emit, write_all};
use crate::{overrides, Outcome, Tuning};

fn load_config(path: &Path, tuning: &Tuning) -> anyhow::Result<AuditConfig> {
    let mut config = AuditConfig::load(path).with_context(|| format!("config {}", path.display()))?;
    overrides::audit_config(&mut config, tuning);
    config.validate()?;
    Ok(config)
}

/// Where missing predictions come from: `--predictions`, else the configured
/// model source (relative paths resolve against the config's directory).
fn model_source(config: &AuditConfig, config_path: &Path, predictions: Option<&Path>) -> Option<ModelSource> {
    if let Some(path) = predictions {
        if config.model.is_some() {
            eprintln!(
                "faith: --predictions {} replaces the configured model source",
                path.display()
            );
        }
        return Some(ModelSource::PredictionsFile {
            path: path.display().to_string(),
        });
    }
    match &config.model {
        Some(ModelSource::PredictionsFile { path }) if Path::new(path).is_relative() => {
            let base = config_path.parent().unwrap_or(Path::new("."));
            Some(ModelSource::PredictionsFile {
                path: base.join(path).display().to_string(),
            })
        }
        other => other.clone(),
    }
}

/// Audit records with predictions filled in where the data lacks them, plus
/// the per-cell table used for cells that have no audit rows.
fn load_records(
    config: &AuditConfig,
    config_path: &Path,
    data: &Path,
    predictions: Option<&Path>,
) -> anyhow::Result<(Vec<PredictionRecord>, Option<CellPredictions>)> {
    let mut records = load_audit_csv(data, &config.schema).with_context(|| format!("data {}", data.display()))?;
    let source = model_source(config, config_path, predictions);
    let table = match &source {
        Some(ModelSource::PredictionsFile { path }) => Some(
            CellPredictions::load(Path::new(path), &config.schema).with_context(|| format!("predictions {path}"))?,
        ),
        _ => None,
    };
    let missing: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].prediction.is_none())
        .collect();
    if config.loss == LossKind::ZeroOne && !missing.is_empty() {
        let subset: Vec<PredictionRecord> = missing.iter().map(|&i| records[i].clone()).collect();
        let filled = match (&table, &source) {
            (Some(t), _) => join_predictions(&subset, t)?,
            (None, Some(src)) => fetch_predictions(&subset, &config.schema, src)?,
            (None, None) => anyhow::bail!(
                "row {}: no prediction in the data and no --predictions file or model source configured",
                records[missing[0]].row
            ),
        };
        for (i, r) in missing.into_iter().zip(filled) {
            records[i] = r;
        }
    }
    Ok((records, table))
}

pub fn audit(
    config_path: &Path,
    data: &Path,
    predictions: Option<&Path>,
    out: Option<&Path>,
    tuning: &Tuning,
) -> anyhow::Result<Outcome> {
    let config = load_config(config_path, tuning)?;
    let (records, table) = load_records(&config, config_path, data, predictions)?;
    let report = run_audit(&config, &records, table.as_ref())?;
    emit(out, &report.to_json()?)?;
    Ok(if report.verdict.reject {
        Outcome::Rejected
    } else {
        Outcome::Ok
    })
}

pub struct Grid {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub label: Option<String>,
}

#[derive(Serialize)]
struct Cell {
    features: Vec<String>,
    label: String,
}

#[derive(Serialize)]
struct DescribedFlow {
    source: Cell,
    destination: Cell,
    mass: f64,
    count: f64,
}

#[derive(Serialize)]
struct HeatmapReport {
    spec_version: &'static str,
    n: u64,
    epsilon: f64,
    faith: f64,
    #[serde(flatten)]
    heatmap: Heatmap,
    /// Every off-diagonal entry of the optimal plan.
    flows: Vec<DescribedFlow>,
}

pub fn localize(
    config_path: &Path,
    data: &Path,
    predictions: Option<&Path>,
    out: Option<&Path>,
    grid: &Grid,
    tuning: &Tuning,
) -> anyhow::Result<Outcome> {
    let config = load_config(config_path, tuning)?;
    let (records, table) = load_records(&config, config_path, data, predictions)?;
    let prepared = PreparedAudit::new(&AuditSetup::from(&config), &records, table.as_ref())?;
    let solution = prepared.solve()?;
    let diff = faith_core::transport_diff(&solution, &prepared.space, &prepared.distribution)?;
    let rows: Vec<&str> = grid.rows.iter().map(String::as_str).collect();
    let cols: Vec<&str> = grid.cols.iter().map(String::as_str).collect();
    let heatmap = marginal_heatmap(&diff, &prepared.space, &rows, &cols, grid.label.as_deref())?;
    let csv = heatmap.to_csv();
    let Some(dir) = out else {
        emit(None, &csv)?;
        return Ok(Outcome::Ok);
    };
    let cell = |k: usize| {
        let (features, label) = prepared.space.describe(k);
        Cell { features, label }
    };
    let report = HeatmapReport {
        spec_version: SPEC_VERSION,
        n: diff.n,
        epsilon: config.epsilon,
        faith: solution.value,
        flows: diff
            .flows
            .iter()
            .map(|f| DescribedFlow {
                source: cell(f.source),
                destination: cell(f.destination),
                mass: f.mass,
                count: f.count,
            })
            .collect(),
        heatmap,
    };
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    write_all(&[(dir.join("heatmap.csv"), csv), (dir.join("heatmap.json"), json)])?;
    Ok(Outcome::Ok)
}

pub fn simulate(spec_path: &Path, out: Option<&Path>, tuning: &Tuning) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("spec {}", spec_path.display()))?;
    let mut spec: SimulationSpec =
        serde_json::from_str(&text).with_context(|| format!("spec {}", spec_path.display()))?;
    overrides::simulation_spec(&mut spec, tuning);
    let summary = faith_core::simulate(&spec)?;
    emit(out, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(Outcome::Ok)
}

pub fn select(config_path: &Path, manifest: &Path, out: Option<&Path>, tuning: &Tuning) -> anyhow::Result<Outcome> {
    let config = load_config(config_path, tuning)?;
    let setup = AuditSetup::from(&config);
    let candidates = load_candidates(&PathBuf::from(manifest), &setup)
        .with_context(|| format!("manifest {}", manifest.display()))?;
    let report = select_candidates(&candidates, &setup)?;
    emit(out, &report.to_json()?)?;
    Ok(if report.chosen.is_some() {
        Outcome::Ok
    } else {
        Outcome::Rejected
    })
}
