//! Monte Carlo checks of the asymptotic and bootstrap approximations on a
//! known population distribution.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::SPEC_VERSION;
use crate::error::{Error, Result};
use crate::faith::sample_asymptotic;
use crate::inference::{bootstrap, multinomial, BootstrapConfig, ConfidenceInterval, FairnessVerdict};
use crate::lp::{is_dual_unique, solve_audit_lp, AuditProblem};
use crate::rng::{derive_seed, substream};
use crate::sample_space::EmpiricalDistribution;

const SAMPLING_TAG: u64 = 1;
const ASYMPTOTIC_TAG: u64 = 2;
const BOOTSTRAP_TAG: u64 = 3;
const REPLICATION_TAG: u64 = 4;

/// A population: LP data plus the true distribution `f_⋆`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub loss: Vec<f64>,
    pub cost: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forbidden: Option<Vec<Vec<f64>>>,
    pub epsilon: f64,
    pub truth: Vec<f64>,
}

fn square(rows: &[Vec<f64>], k: usize, what: &str) -> Result<nalgebra::DMatrix<f64>> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput(format!("{what} must be {k}×{k}")));
    }
    Ok(nalgebra::DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

impl Instance {
    pub fn problem(&self) -> Result<AuditProblem> {
        let k = self.loss.len();
        let cost = square(&self.cost, k, "cost")?;
        let forbidden = match &self.forbidden {
            Some(d) => square(d, k, "forbidden")?,
            None => nalgebra::DMatrix::zeros(k, k),
        };
        if self.truth.len() != k {
            return Err(Error::InvalidInput(format!("truth must have {k} entries")));
        }
        AuditProblem::from_matrices(self.loss.clone(), cost, forbidden, self.epsilon)
    }
}

/// Draws `f_n = Y/n` with `Y ~ Multinomial(n; truth)`.
pub fn draw_empirical<R: Rng + ?Sized>(rng: &mut R, truth: &[f64], n: u64) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::from_counts(multinomial(rng, n, truth))
}

/// Draws of `√n{ψ(f_n) − ψ(f_⋆)}`.
pub fn sampling_distribution(
    problem: &AuditProblem,
    truth: &[f64],
    n: u64,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let psi = solve_audit_lp(problem, truth)?.value;
    let root_n = (n as f64).sqrt();
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let f_n = draw_empirical(&mut rng, truth, n)?;
            Ok(root_n * (solve_audit_lp(problem, f_n.probabilities())?.value - psi))
        })
        .collect()
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS distance of an empty sample");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JarqueBera {
    pub statistic: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Upper tail of χ²₂, `exp(−JB/2)`.
    pub p_value: f64,
}

pub fn jarque_bera(sample: &[f64]) -> JarqueBera {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let moment = |p: i32| sample.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
    let var = moment(2);
    let (skewness, excess_kurtosis) = if var > 0.0 {
        (moment(3) / var.powf(1.5), moment(4) / (var * var) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let statistic = n / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    JarqueBera {
        statistic,
        skewness,
        excess_kurtosis,
        p_value: (-statistic / 2.0).exp(),
    }
}

/// Repeated-sampling behavior of the interval and the test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub reps: usize,
    pub psi_true: f64,
    /// Fraction of two-sided intervals containing `ψ(f_⋆)`.
    pub coverage: f64,
    /// Fraction of replications rejecting `ψ(f_⋆) ≤ δ`, when `δ` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_rate: Option<f64>,
}

/// Draws `reps` data sets of size `n`, bootstraps each, and records interval
/// coverage and test rejections. Replication `i` draws its data from stream
/// `i` and seeds its bootstrap from that stream, so results do not depend on
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn replicate_inference(
    problem: &AuditProblem,
    truth: &[f64],
    n: u64,
    reps: usize,
    cfg: &BootstrapConfig,
    alpha: f64,
    delta: Option<f64>,
    seed: u64,
) -> Result<ReplicationSummary> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let psi = solve_audit_lp(problem, truth)?.value;
    let outcomes = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let f_n = draw_empirical(&mut rng, truth, n)?;
            let mut local = cfg.clone();
            local.seed = rng.random();
            let dist = bootstrap(problem, &f_n, &local)?;
            let covered = ConfidenceInterval::two_sided(&dist, alpha)?.contains(psi);
            let reject = delta
                .map(|d| FairnessVerdict::from_distribution(&dist, d, alpha).map(|v| v.reject))
                .transpose()?;
            Ok((covered, reject))
        })
        .collect::<Result<Vec<_>>>()?;
    let frac = |count: usize| count as f64 / reps as f64;
    Ok(ReplicationSummary {
        reps,
        psi_true: psi,
        coverage: frac(outcomes.iter().filter(|o| o.0).count()),
        rejection_rate: delta.map(|_| frac(outcomes.iter().filter(|o| o.1 == Some(true)).count())),
    })
}

fn default_alpha() -> f64 {
    0.05
}

fn default_asymptotic_draws() -> usize {
    100_000
}

/// Input of the `simulate` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub instance: Instance,
    pub n: u64,
    /// Monte Carlo replications of the sampling distribution and of the
    /// interval/test.
    pub reps: usize,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_asymptotic_draws")]
    pub asymptotic_draws: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RawSamples {
    pub sampling: Vec<f64>,
    pub asymptotic: Vec<f64>,
    pub bootstrap: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub spec_version: String,
    pub psi_true: f64,
    pub dual_unique: bool,
    pub ks_sampling_vs_asymptotic: f64,
    /// One bootstrap distribution, computed at a single `f_n`.
    pub ks_bootstrap_vs_asymptotic: f64,
    pub asymptotic_normality: JarqueBera,
    pub inference: ReplicationSummary,
    pub samples: RawSamples,
}

pub fn simulate(spec: &SimulationSpec) -> Result<SimulationSummary> {
    let problem = spec.instance.problem()?;
    let truth = &spec.instance.truth;
    let seed = spec.seed;
    let sampling = sampling_distribution(&problem, truth, spec.n, spec.reps, derive_seed(seed, SAMPLING_TAG))?;
    let asymptotic = sample_asymptotic(
        &problem,
        truth,
        spec.asymptotic_draws,
        derive_seed(seed, ASYMPTOTIC_TAG),
    )?
    .values;

    let mut rng = substream(derive_seed(seed, BOOTSTRAP_TAG), 0);
    let f_n = draw_empirical(&mut rng, truth, spec.n)?;
    let mut cfg = spec.bootstrap.clone();
    cfg.seed = rng.random();
    let boot = bootstrap(&problem, &f_n, &cfg)?.values;

    let mut inner = spec.bootstrap.clone();
    inner.seed = 0;
    let inference = replicate_inference(
        &problem,
        truth,
        spec.n,
        spec.reps,
        &inner,
        spec.alpha,
        spec.delta,
        derive_seed(seed, REPLICATION_TAG),
    )?;
    Ok(SimulationSummary {
        spec_version: SPEC_VERSION.into(),
        psi_true: inference.psi_true,
        dual_unique: is_dual_unique(&problem, truth)?,
        ks_sampling_vs_asymptotic: ks_distance(&sampling, &asymptotic),
        ks_bootstrap_vs_asymptotic: ks_distance(&boot, &asymptotic),
        asymptotic_normality: jarque_bera(&asymptotic),
        inference,
        samples: RawSamples {
            sampling,
            asymptotic,
            bootstrap: boot,
        },
    })
}
