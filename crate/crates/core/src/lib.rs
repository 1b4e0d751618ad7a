//! Individual-fairness auditing of black-box classifiers.
//!
//! The FaiTH statistic is the largest increase in expected loss an auditor
//! can produce by transporting the audit distribution within a Wasserstein
//! budget, where moving mass between individuals who differ only in
//! protected attributes is free. This crate computes it exactly as a linear
//! program, performs bootstrap inference on it, and localizes where the
//! adversarial transport moves mass.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod lp;
pub mod sample_space;
mod simplex;

pub use error::{Error, Result};
pub use lp::{
    dual_spread, is_dual_unique, optimize_over_dual_face, solve_audit_lp, AuditProblem, DualCertificate, LpSolution,
    TransportPlan,
};
pub use sample_space::{
    bucket_label, build_costs, build_space, CostStructure, EmpiricalDistribution, FeatureDef, FiniteSampleSpace,
    SamplePoint, Schema, SimilaritySpec,
};
pub mod faith;
pub mod inference;
mod rng;

pub use faith::{
    faith_statistic, multinomial_covariance, robustness_gap, sample_asymptotic, AsymptoticSample, GaussianSampler,
    MultinomialCovariance, RobustnessCheck,
};
pub use inference::{
    bootstrap, bootstrap_m_out_of_n, bootstrap_numerical, delta_fairness_test, efron_bootstrap_unchecked, one_sided_ci,
    quantile, two_sided_ci, BootstrapConfig, BootstrapDistribution, BootstrapMethod, ConfidenceInterval,
    FairnessVerdict, Sidedness,
};
pub mod ingestion;
pub mod localization;

pub use ingestion::{
    cell_losses, fetch_predictions, join_predictions, load_audit_csv, mean_loss, query_http, write_audit_csv,
    zero_one_loss, AuditConfig, CellPredictions, LossKind, ModelSource, PredictionRecord, PrivilegedGroup,
};
pub use localization::{
    group_fairness_metrics, largest_remainder, marginal_heatmap, transport_diff, Flow, GroupMetrics, GroupOutcome,
    Heatmap, TransportDiff,
};
pub mod audit;
pub mod selection;

pub use audit::{run_audit, AuditReport, AuditSetup, PreparedAudit, SPEC_VERSION};
pub use selection::{load_candidates, load_manifest, select, Candidate, CandidateOutcome, SelectionReport};
pub mod simulation;

pub use simulation::{
    draw_empirical, jarque_bera, ks_distance, replicate_inference, sampling_distribution, simulate, Instance,
    JarqueBera, ReplicationSummary, SimulationSpec, SimulationSummary,
};
