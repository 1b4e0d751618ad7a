//! Model selection under a FaiTH constraint: keep the candidates whose
//! one-sided lower bound does not exceed `δ`, then take the most accurate.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{AuditSetup, PreparedAudit, SPEC_VERSION};
use crate::error::{Error, Result};
use crate::inference::{bootstrap, ConfidenceInterval};
use crate::ingestion::{load_audit_csv, mean_loss, LossKind, PredictionRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub predictions_csv_path: String,
}

/// Reads a candidate manifest. Relative paths resolve against the manifest's
/// directory.
pub fn load_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries: Vec<ManifestEntry> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(entries
        .into_iter()
        .map(|e| {
            let p = PathBuf::from(&e.predictions_csv_path);
            (e.name, if p.is_absolute() { p } else { base.join(p) })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub name: String,
    pub records: Vec<PredictionRecord>,
    /// Mean zero-one loss over `records`.
    pub validation_error: f64,
}

impl Candidate {
    pub fn new(name: impl Into<String>, records: Vec<PredictionRecord>) -> Result<Self> {
        let validation_error = mean_loss(&records, LossKind::ZeroOne)?;
        Ok(Self {
            name: name.into(),
            records,
            validation_error,
        })
    }
}

/// Loads every manifest entry as a candidate (audit-CSV layout with a
/// `prediction` column).
pub fn load_candidates(manifest: &Path, setup: &AuditSetup) -> Result<Vec<Candidate>> {
    load_manifest(manifest)?
        .into_iter()
        .map(|(name, path)| Candidate::new(name, load_audit_csv(&path, &setup.schema)?))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateOutcome {
    pub name: String,
    pub validation_error: f64,
    pub faith: Option<f64>,
    pub ci_lower: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionReport {
    pub spec_version: String,
    pub delta: f64,
    pub alpha: f64,
    /// Sorted by name.
    pub candidates: Vec<CandidateOutcome>,
    pub chosen: Option<String>,
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn evaluate(candidate: &Candidate, setup: &AuditSetup) -> Result<(f64, f64)> {
    let prepared = PreparedAudit::new(setup, &candidate.records, None)?;
    let dist = bootstrap(&prepared.problem, &prepared.distribution, &setup.bootstrap)?;
    let ci = ConfidenceInterval::one_sided(&dist, setup.alpha)?;
    Ok((dist.faith, ci.lower))
}

/// Evaluates every candidate on its own validation predictions. A candidate
/// whose evaluation fails is reported as failing with its error message.
pub fn select(candidates: &[Candidate], setup: &AuditSetup) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates".into()));
    }
    let mut names = BTreeSet::new();
    if let Some(dup) = candidates.iter().find(|c| !names.insert(c.name.as_str())) {
        return Err(Error::InvalidInput(format!("duplicate candidate name `{}`", dup.name)));
    }
    let mut rows: Vec<CandidateOutcome> = candidates
        .par_iter()
        .map(|c| match evaluate(c, setup) {
            Ok((faith, lower)) => CandidateOutcome {
                name: c.name.clone(),
                validation_error: c.validation_error,
                faith: Some(faith),
                ci_lower: Some(lower),
                pass: lower <= setup.delta,
                error: None,
            },
            Err(e) => CandidateOutcome {
                name: c.name.clone(),
                validation_error: c.validation_error,
                faith: None,
                ci_lower: None,
                pass: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| a.name.cmp(&b.name));
    let chosen = rows
        .iter()
        .filter(|r| r.pass)
        .min_by(|a, b| {
            a.validation_error
                .total_cmp(&b.validation_error)
                .then_with(|| a.name.cmp(&b.name))
        })
        .map(|r| r.name.clone());
    Ok(SelectionReport {
        spec_version: SPEC_VERSION.into(),
        delta: setup.delta,
        alpha: setup.alpha,
        candidates: rows,
        chosen,
    })
}
