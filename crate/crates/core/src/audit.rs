//! End-to-end audit: records → sample space → LP → bootstrap → report.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{bootstrap, BootstrapConfig, BootstrapMethod, ConfidenceInterval, FairnessVerdict};
use crate::ingestion::{
    cell_losses, mean_loss, AuditConfig, CellPredictions, LossKind, PredictionRecord, PrivilegedGroup,
};
use crate::localization::{group_fairness_metrics, transport_diff, GroupMetrics, GroupOutcome, TransportDiff};
use crate::lp::{is_dual_unique, solve_audit_lp, AuditProblem, LpSolution};
use crate::sample_space::{build_costs, build_space, EmpiricalDistribution, FiniteSampleSpace, Schema, SimilaritySpec};

/// Version tag written at the top of every JSON report.
pub const SPEC_VERSION: &str = "1.0";

/// What is needed to turn records into an LP.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditSetup {
    pub schema: Schema,
    pub similarity: SimilaritySpec,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub loss: LossKind,
    pub bootstrap: BootstrapConfig,
    pub complete_space: bool,
}

impl From<&AuditConfig> for AuditSetup {
    fn from(c: &AuditConfig) -> Self {
        let mut bootstrap = c.bootstrap.clone();
        bootstrap.seed = c.seed;
        Self {
            schema: c.schema.clone(),
            similarity: c.similarity.clone(),
            epsilon: c.epsilon,
            delta: c.delta,
            alpha: c.alpha,
            loss: c.loss,
            bootstrap,
            complete_space: c.complete_space,
        }
    }
}

pub struct PreparedAudit {
    pub space: FiniteSampleSpace,
    pub distribution: EmpiricalDistribution,
    pub problem: AuditProblem,
}

impl PreparedAudit {
    pub fn new(setup: &AuditSetup, records: &[PredictionRecord], fallback: Option<&CellPredictions>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyData);
        }
        let (space, distribution) = build_space(
            records.iter().map(|r| (r.features.as_slice(), r.label.as_str())),
            &setup.schema,
            setup.complete_space,
        )?;
        let costs = build_costs(&space, &setup.similarity)?;
        let loss = cell_losses(&space, records, setup.loss, fallback)?;
        let problem = AuditProblem::new(loss, costs, setup.epsilon)?;
        Ok(Self {
            space,
            distribution,
            problem,
        })
    }

    pub fn solve(&self) -> Result<LpSolution> {
        solve_audit_lp(&self.problem, self.distribution.probabilities())
    }

    pub fn transport_diff(&self) -> Result<TransportDiff> {
        transport_diff(&self.solve()?, &self.space, &self.distribution)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub delta: f64,
    pub alpha: f64,
    /// True when `δ` lies below the one-sided lower bound.
    pub reject: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapDiagnostics {
    pub method: BootstrapMethod,
    pub replicates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub rejections: u64,
    pub dual_unique: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Seeds {
    pub run: u64,
    pub bootstrap: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub spec_version: String,
    pub n: u64,
    pub points: usize,
    pub faith: f64,
    pub mean_loss: f64,
    pub ci_two_sided: Interval,
    pub ci_one_sided_lower: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_metrics: Option<GroupMetrics>,
    pub bootstrap: BootstrapDiagnostics,
    pub seeds: Seeds,
    pub config: AuditConfig,
}

impl AuditReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Group outcomes for metric computation; `None` if any record lacks a prediction.
pub fn group_outcomes(
    schema: &Schema,
    group: &PrivilegedGroup,
    records: &[PredictionRecord],
) -> Result<Option<Vec<GroupOutcome>>> {
    let feature = schema
        .feature_index(&group.feature)
        .ok_or_else(|| Error::Config(format!("privileged feature `{}` is not in the schema", group.feature)))?;
    Ok(records
        .iter()
        .map(|r| {
            r.prediction.as_ref().map(|p| GroupOutcome {
                privileged: group.values.contains(&r.features[feature]),
                label: r.label == group.positive_label,
                predicted: *p == group.positive_label,
            })
        })
        .collect())
}

/// Runs the whole audit. Records must carry whatever the configured loss needs.
pub fn run_audit(
    config: &AuditConfig,
    records: &[PredictionRecord],
    fallback: Option<&CellPredictions>,
) -> Result<AuditReport> {
    config.validate()?;
    let setup = AuditSetup::from(config);
    let prepared = PreparedAudit::new(&setup, records, fallback)?;
    let f = prepared.distribution.probabilities();
    let dist = bootstrap(&prepared.problem, &prepared.distribution, &setup.bootstrap)?;
    let two = ConfidenceInterval::two_sided(&dist, config.alpha)?;
    let one = ConfidenceInterval::one_sided(&dist, config.alpha)?;
    let verdict = FairnessVerdict::from_distribution(&dist, config.delta, config.alpha)?;
    let group_metrics = match &config.privileged {
        Some(group) => group_outcomes(&config.schema, group, records)?.map(|o| group_fairness_metrics(&o)),
        None => None,
    };
    let mean = match config.loss {
        LossKind::ZeroOne if records.iter().any(|r| r.prediction.is_none()) => {
            return Err(Error::MissingPrediction {
                row: records.iter().find(|r| r.prediction.is_none()).map_or(0, |r| r.row),
            })
        }
        kind => mean_loss(records, kind)?,
    };
    Ok(AuditReport {
        spec_version: SPEC_VERSION.into(),
        n: prepared.distribution.n(),
        points: prepared.space.len(),
        faith: dist.faith,
        mean_loss: mean,
        ci_two_sided: Interval {
            lower: two.lower,
            upper: two.upper,
            clamped: two.clamped,
        },
        ci_one_sided_lower: one.lower,
        verdict: Verdict {
            delta: verdict.delta,
            alpha: verdict.alpha,
            reject: verdict.reject,
        },
        group_metrics,
        bootstrap: BootstrapDiagnostics {
            method: dist.method,
            replicates: dist.len(),
            resample_size: dist.resample_size,
            step: dist.step,
            rejections: dist.rejections,
            dual_unique: is_dual_unique(&prepared.problem, f)?,
        },
        seeds: Seeds {
            run: config.seed,
            bootstrap: setup.bootstrap.seed,
        },
        config: config.clone(),
    })
}
