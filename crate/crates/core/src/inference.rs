//! Bootstrap inference for the FaiTH statistic.
//!
//! `ψ` is only directionally differentiable, so Efron's n-out-of-n bootstrap
//! is inconsistent in general. Two consistent resamplers are provided:
//!
//! * m-out-of-n: `√m{ψ(Y*/m) − ψ(f_n)}` with `Y* ~ Multinomial(m; f_n)`;
//! * numerical derivative: `ε_n⁻¹{ψ(f_n + ε_n Z*) − ψ(f_n)}` with
//!   `Z* ~ N(0, Σ(f_n))` truncated to `f_n + ε_n Z* ≥ 0`.
//!
//! Both approximate the law of `√n{ψ(f_n) − ψ(f_⋆)}`, so quantiles are mapped
//! back with `1/√n` in either case.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faith::GaussianSampler;
use crate::lp::{solve_audit_lp, AuditProblem};
use crate::rng::substream;
use crate::sample_space::EmpiricalDistribution;

pub const DEFAULT_REPLICATES: usize = 1000;
const PROBE_DRAWS: usize = 4096;
const MIN_ACCEPTANCE: f64 = 1e-3;
const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    #[default]
    MOutOfN,
    NumericalDerivative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default)]
    pub method: BootstrapMethod,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// m for the m-out-of-n bootstrap; defaults to `⌈2√n⌉` (capped at `n − 1`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_size: Option<usize>,
    /// ε_n for the numerical bootstrap; defaults to `n^{-1/4}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Set by the caller (run configuration), not read from the bootstrap block.
    #[serde(skip)]
    pub seed: u64,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            method: BootstrapMethod::MOutOfN,
            replicates: DEFAULT_REPLICATES,
            resample_size: None,
            step: None,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn m_out_of_n(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            ..Self::default()
        }
    }

    pub fn numerical(replicates: usize, seed: u64) -> Self {
        Self {
            method: BootstrapMethod::NumericalDerivative,
            replicates,
            seed,
            ..Self::default()
        }
    }

    pub fn resample_size_for(&self, n: u64) -> Result<usize> {
        if n < 2 {
            return Err(Error::Config("m-out-of-n bootstrap needs n ≥ 2".into()));
        }
        let m = match self.resample_size {
            Some(m) => m,
            None => ((2.0 * (n as f64).sqrt()).ceil() as usize).min(n as usize - 1),
        };
        if m == 0 || m as u64 >= n {
            return Err(Error::Config(format!(
                "resample size m = {m} must satisfy 1 ≤ m < n = {n}"
            )));
        }
        Ok(m)
    }

    pub fn step_for(&self, n: u64) -> Result<f64> {
        let step = self.step.unwrap_or_else(|| (n as f64).powf(-0.25));
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::Config(format!("step ε_n = {step} must be positive")));
        }
        Ok(step)
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("at least one bootstrap replicate is required".into()));
        }
        Ok(())
    }
}

/// Scaled bootstrap statistics in iteration order.
#[derive(Clone, Debug, Serialize)]
pub struct BootstrapDistribution {
    pub method: BootstrapMethod,
    pub values: Vec<f64>,
    /// Factor applied to raw differences: `√m` or `1/ε_n`.
    pub scale: f64,
    /// Audit sample size; quantiles map back to the statistic via `1/√n`.
    pub n: u64,
    pub faith: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub rejections: u64,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl BootstrapDistribution {
    #[allow(clippy::too_many_arguments)]
    fn new(
        method: BootstrapMethod,
        values: Vec<f64>,
        scale: f64,
        n: u64,
        faith: f64,
        resample_size: Option<usize>,
        step: Option<f64>,
        rejections: u64,
    ) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "bootstrap produced an empty or non-finite sample".into(),
            ));
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            method,
            values,
            scale,
            n,
            faith,
            resample_size,
            step,
            rejections,
            sorted,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `c*_q = inf{c : F_B(c) ≥ q}`, the `⌈qB⌉`-th order statistic.
    pub fn quantile(&self, q: f64) -> f64 {
        sorted_quantile(&self.sorted, q)
    }
}

/// Left-continuous quantile of an arbitrary sample: the `⌈qB⌉`-th smallest
/// value, the minimum for `q = 0`.
pub fn quantile(sample: &[f64], q: f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_quantile(&sorted, q)
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level {q} outside [0, 1]");
    let b = sorted.len();
    // shave rounding so e.g. 0.95 · 1000 selects the 950th value
    let rank = ((q * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(b) - 1]
}

pub(crate) fn multinomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; p.len()];
    let mut remaining = trials;
    let mut mass = 1.0f64;
    for (i, &pi) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == p.len() {
            out[i] = remaining;
            break;
        }
        let prob = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, prob).expect("valid binomial").sample(rng);
        out[i] = draw;
        remaining -= draw;
        mass -= pi;
    }
    out
}

pub fn bootstrap_m_out_of_n(
    problem: &AuditProblem,
    f_n: &EmpiricalDistribution,
    cfg: &BootstrapConfig,
) -> Result<BootstrapDistribution> {
    if cfg.method != BootstrapMethod::MOutOfN {
        return Err(Error::Config(
            "configuration is not for the m-out-of-n bootstrap".into(),
        ));
    }
    cfg.validate()?;
    let m = cfg.resample_size_for(f_n.n())?;
    let f = f_n.probabilities();
    let faith = solve_audit_lp(problem, f)?.value;
    let scale = (m as f64).sqrt();
    let values = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, b as u64);
            let counts = multinomial(&mut rng, m as u64, f);
            let resampled: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
            solve_audit_lp(problem, &resampled)
                .map(|s| scale * (s.value - faith))
                .map_err(|e| Error::Bootstrap {
                    iteration: b,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    BootstrapDistribution::new(
        BootstrapMethod::MOutOfN,
        values,
        scale,
        f_n.n(),
        faith,
        Some(m),
        None,
        0,
    )
}

fn accepted(f: &[f64], z: &[f64], step: f64) -> Option<Vec<f64>> {
    let g: Vec<f64> = f.iter().zip(z).map(|(a, b)| a + step * b).collect();
    g.iter().all(|&x| x >= 0.0).then_some(g)
}

pub fn bootstrap_numerical(
    problem: &AuditProblem,
    f_n: &EmpiricalDistribution,
    cfg: &BootstrapConfig,
) -> Result<BootstrapDistribution> {
    if cfg.method != BootstrapMethod::NumericalDerivative {
        return Err(Error::Config("configuration is not for the numerical bootstrap".into()));
    }
    cfg.validate()?;
    let step = cfg.step_for(f_n.n())?;
    let f = f_n.probabilities();
    let sampler = GaussianSampler::new(f)?;

    let mut probe = substream(cfg.seed, u64::MAX);
    let hits = (0..PROBE_DRAWS)
        .filter(|_| accepted(f, &sampler.sample(&mut probe), step).is_some())
        .count();
    if (hits as f64) < MIN_ACCEPTANCE * PROBE_DRAWS as f64 {
        return Err(Error::Config(format!(
            "step ε_n = {step} accepts {hits}/{PROBE_DRAWS} perturbations; choose a smaller step"
        )));
    }

    let faith = solve_audit_lp(problem, f)?.value;
    let draws = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, b as u64);
            let mut rejected = 0u64;
            let g = loop {
                if let Some(g) = accepted(f, &sampler.sample(&mut rng), step) {
                    break g;
                }
                rejected += 1;
                if rejected as usize >= MAX_ATTEMPTS {
                    return Err(Error::Bootstrap {
                        iteration: b,
                        source: Box::new(Error::Config("no admissible perturbation found".into())),
                    });
                }
            };
            let value = solve_audit_lp(problem, &g).map_err(|e| Error::Bootstrap {
                iteration: b,
                source: Box::new(e),
            })?;
            Ok(((value.value - faith) / step, rejected))
        })
        .collect::<Result<Vec<_>>>()?;
    let rejections = draws.iter().map(|d| d.1).sum();
    let values = draws.into_iter().map(|d| d.0).collect();
    BootstrapDistribution::new(
        BootstrapMethod::NumericalDerivative,
        values,
        1.0 / step,
        f_n.n(),
        faith,
        None,
        Some(step),
        rejections,
    )
}

/// Runs whichever resampler `cfg.method` selects.
pub fn bootstrap(
    problem: &AuditProblem,
    f_n: &EmpiricalDistribution,
    cfg: &BootstrapConfig,
) -> Result<BootstrapDistribution> {
    match cfg.method {
        BootstrapMethod::MOutOfN => bootstrap_m_out_of_n(problem, f_n, cfg),
        BootstrapMethod::NumericalDerivative => bootstrap_numerical(problem, f_n, cfg),
    }
}

/// Efron's n-out-of-n bootstrap, `√n{ψ(f_n*) − ψ(f_n)}`.
///
/// Inconsistent whenever the dual optimal face is not a singleton. Returned
/// as a raw sample so it cannot feed the interval or test constructors; it
/// exists to demonstrate that failure.
pub fn efron_bootstrap_unchecked(
    problem: &AuditProblem,
    f_n: &EmpiricalDistribution,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = f_n.n();
    let f = f_n.probabilities();
    let faith = solve_audit_lp(problem, f)?.value;
    let scale = (n as f64).sqrt();
    (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let counts = multinomial(&mut rng, n, f);
            let resampled: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            Ok(scale * (solve_audit_lp(problem, &resampled)?.value - faith))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    One,
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    /// `+∞` for one-sided intervals (serialized as `null`).
    pub upper: f64,
    pub level: f64,
    pub sided: Sidedness,
    /// Whether an endpoint was raised to 0, the lower limit of `ψ`.
    pub clamped: bool,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

impl ConfidenceInterval {
    /// `[ψ(f_n) − c*_{1−α/2}/√n, ψ(f_n) − c*_{α/2}/√n]`, endpoints floored at 0.
    pub fn two_sided(dist: &BootstrapDistribution, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let root_n = (dist.n as f64).sqrt();
        let lower = dist.faith - dist.quantile(1.0 - alpha / 2.0) / root_n;
        let upper = dist.faith - dist.quantile(alpha / 2.0) / root_n;
        Ok(Self {
            lower: lower.max(0.0),
            upper: upper.max(0.0),
            level: 1.0 - alpha,
            sided: Sidedness::Two,
            clamped: lower < 0.0,
        })
    }

    /// `[ψ(f_n) − c*_{1−α}/√n, ∞)`, lower endpoint floored at 0.
    pub fn one_sided(dist: &BootstrapDistribution, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let lower = dist.faith - dist.quantile(1.0 - alpha) / (dist.n as f64).sqrt();
        Ok(Self {
            lower: lower.max(0.0),
            upper: f64::INFINITY,
            level: 1.0 - alpha,
            sided: Sidedness::One,
            clamped: lower < 0.0,
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Outcome of testing `H₀: ψ(f_⋆) ≤ δ` against `H₁: ψ(f_⋆) > δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FairnessVerdict {
    pub delta: f64,
    pub alpha: f64,
    pub reject: bool,
    pub ci_lower: f64,
    pub faith: f64,
}

impl FairnessVerdict {
    /// Rejects exactly when `δ` lies below the one-sided interval.
    pub fn from_distribution(dist: &BootstrapDistribution, delta: f64, alpha: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidInput(format!(
                "delta = {delta} must be finite and nonnegative"
            )));
        }
        let ci = ConfidenceInterval::one_sided(dist, alpha)?;
        Ok(Self {
            delta,
            alpha,
            reject: delta < ci.lower,
            ci_lower: ci.lower,
            faith: dist.faith,
        })
    }
}

pub fn two_sided_ci(
    problem: &AuditProblem,
    f_n: &EmpiricalDistribution,
    cfg: &BootstrapConfig,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    ConfidenceInterval::two_sided(&bootstrap(problem, f_n, cfg)?, alpha)
}

pub fn one_sided_ci(
    problem: &AuditProblem,
    f_n: &EmpiricalDistribution,
    cfg: &BootstrapConfig,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    ConfidenceInterval::one_sided(&bootstrap(problem, f_n, cfg)?, alpha)
}

pub fn delta_fairness_test(
    problem: &AuditProblem,
    f_n: &EmpiricalDistribution,
    cfg: &BootstrapConfig,
    delta: f64,
    alpha: f64,
) -> Result<FairnessVerdict> {
    check_alpha(alpha)?;
    FairnessVerdict::from_distribution(&bootstrap(problem, f_n, cfg)?, delta, alpha)
}
