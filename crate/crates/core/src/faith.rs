//! The FaiTH statistic, its asymptotic law and the metric-robustness check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{optimize_over_dual_face, solve_audit_lp, AuditProblem};
use crate::rng::substream;
use crate::sample_space::EmpiricalDistribution;

/// `ψ(f_n)`, the optimal value of the auditor's LP at the empirical distribution.
pub fn faith_statistic(problem: &AuditProblem, f_n: &EmpiricalDistribution) -> Result<f64> {
    Ok(solve_audit_lp(problem, f_n.probabilities())?.value)
}

/// Covariance `Σ(p)` of a single multinomial draw: `p_i(1 − p_i)` on the
/// diagonal and `−p_i p_j` off it.
#[derive(Clone, Debug, PartialEq)]
pub struct MultinomialCovariance {
    pub matrix: DMatrix<f64>,
}

pub fn multinomial_covariance(p: &[f64]) -> Result<MultinomialCovariance> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput("covariance needs a probability vector".into()));
    }
    let k = p.len();
    let matrix = DMatrix::from_fn(k, k, |i, j| if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] });
    Ok(MultinomialCovariance { matrix })
}

/// Draws `Z ~ N(0, Σ(p))` through a symmetric square root of `Σ(p)`.
///
/// The root is taken on the support of `p` only, so coordinates without mass
/// are exactly zero, and each draw is projected onto `1ᵀz = 0` (the range of
/// `Σ(p)`) to remove rounding drift.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    k: usize,
    support: Vec<usize>,
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(p: &[f64]) -> Result<Self> {
        let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
        let sub: Vec<f64> = support.iter().map(|&i| p[i]).collect();
        let sigma = multinomial_covariance(&renormalize(&sub))?.matrix;
        let eigen = SymmetricEigen::try_new(sigma, 1e-14, 10_000)
            .ok_or_else(|| Error::Numeric("eigendecomposition of Σ(p) did not converge".into()))?;
        if eigen.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite eigenvalue in Σ(p)".into()));
        }
        let top = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let roots = eigen.eigenvalues.map(|v| {
            if v > 1e-13 * top.max(f64::MIN_POSITIVE) {
                v.sqrt()
            } else {
                0.0
            }
        });
        let q = &eigen.eigenvectors;
        let root = q * DMatrix::from_diagonal(&roots) * q.transpose();
        Ok(Self {
            k: p.len(),
            support,
            root,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let s = self.support.len();
        let g = DVector::from_fn(s, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = &self.root * g;
        let mean = if s > 0 { z.sum() / s as f64 } else { 0.0 };
        let mut out = vec![0.0; self.k];
        for (idx, &i) in self.support.iter().enumerate() {
            out[i] = z[idx] - mean;
        }
        out
    }
}

fn renormalize(p: &[f64]) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    p.iter().map(|x| x / total).collect()
}

/// Independent draws of `inf{(λ − l)ᵀZ : λ ∈ Λ}` with `Z ~ N(0, Σ(f))`,
/// the limit law of `√n{ψ(f_n) − ψ(f)}`.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticSample {
    pub values: Vec<f64>,
}

/// Draw `i` uses the ChaCha stream `i` of `seed`, so the sample does not
/// depend on the number of worker threads.
pub fn sample_asymptotic(problem: &AuditProblem, f: &[f64], reps: usize, seed: u64) -> Result<AsymptoticSample> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let solution = solve_audit_lp(problem, f)?;
    let v = solution.dual_objective(problem, f);
    let sampler = GaussianSampler::new(f)?;
    let values = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let z = sampler.sample(&mut rng);
            optimize_over_dual_face(problem, f, &z, v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AsymptoticSample { values })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RobustnessCheck {
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares FaiTH under two cost matrices against `L·η·D²/√ε`.
///
/// The caller supplies the Lipschitz constant `L` of the loss (with respect to
/// both feature metrics), the cost discrepancy factor `η` and the common
/// feature-space diameter `D`.
pub fn robustness_gap(
    problem_a: &AuditProblem,
    problem_b: &AuditProblem,
    f: &[f64],
    lipschitz: f64,
    eta: f64,
    diameter: f64,
) -> Result<RobustnessCheck> {
    let eps = problem_a.epsilon();
    if eps <= 0.0 {
        return Err(Error::InvalidInput("robustness bound needs epsilon > 0".into()));
    }
    if problem_b.epsilon() != eps
        || problem_a.loss() != problem_b.loss()
        || problem_a.forbidden() != problem_b.forbidden()
    {
        return Err(Error::InvalidInput(
            "problems must share loss, indicator matrix and epsilon".into(),
        ));
    }
    if [lipschitz, eta, diameter].iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput("L, η and D must be finite and nonnegative".into()));
    }
    let gap = (solve_audit_lp(problem_a, f)?.value - solve_audit_lp(problem_b, f)?.value).abs();
    let bound = lipschitz * eta * diameter * diameter / eps.sqrt();
    Ok(RobustnessCheck {
        gap,
        bound,
        holds: gap <= bound + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn canonical(eps: f64) -> AuditProblem {
        AuditProblem::from_matrices(vec![0.0, 1.0], dmatrix![0.0, 1.0; 1.0, 0.0], DMatrix::zeros(2, 2), eps).unwrap()
    }

    #[test]
    fn statistic_examples() {
        let f = EmpiricalDistribution::from_counts(vec![5, 5]).unwrap();
        assert_eq!(faith_statistic(&canonical(0.0), &f).unwrap(), 0.0);
        assert!((faith_statistic(&canonical(0.2), &f).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(
            multinomial_covariance(&[1.0, 0.0]).unwrap().matrix,
            DMatrix::zeros(2, 2)
        );
        assert_eq!(
            multinomial_covariance(&[0.5, 0.5]).unwrap().matrix,
            dmatrix![0.25, -0.25; -0.25, 0.25]
        );
        assert!(multinomial_covariance(&[0.7, 0.7]).is_err());
    }

    #[test]
    fn covariance_is_psd_and_annihilates_ones() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let p = renormalize(&raw);
            let sigma = multinomial_covariance(&p).unwrap().matrix;
            let ones = DVector::from_element(6, 1.0);
            assert!((&sigma * ones).amax() < 1e-15);
            assert_eq!(sigma, sigma.transpose());
            let eig = SymmetricEigen::new(sigma).eigenvalues;
            assert!(eig.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn sampler_matches_covariance() {
        let p = [0.2, 0.0, 0.5, 0.3];
        let sampler = GaussianSampler::new(&p).unwrap();
        let mut rng = substream(11, 0);
        let n = 200_000;
        let mut acc = DMatrix::<f64>::zeros(4, 4);
        for _ in 0..n {
            let z = DVector::from_vec(sampler.sample(&mut rng));
            assert_eq!(z[1], 0.0);
            assert!(z.sum().abs() < 1e-12);
            acc += &z * z.transpose();
        }
        acc /= n as f64;
        let sigma = multinomial_covariance(&p).unwrap().matrix;
        assert!((acc - sigma).amax() < 0.01);
    }

    #[test]
    fn asymptotic_sample_rejects_zero_reps_and_is_seeded() {
        let p = canonical(10.0);
        assert!(sample_asymptotic(&p, &[0.5, 0.5], 0, 1).is_err());
        let a = sample_asymptotic(&p, &[0.5, 0.5], 100, 9).unwrap();
        let b = sample_asymptotic(&p, &[0.5, 0.5], 100, 9).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn singleton_dual_gives_gaussian_sample() {
        // ε = 10: ψ = f₁ locally, derivative h₁, so the law is N(0, 1/4).
        let draws = sample_asymptotic(&canonical(10.0), &[0.5, 0.5], 100_000, 5)
            .unwrap()
            .values;
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let skew = draws.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
        assert!(skew.abs() < 0.1, "skew {skew}");
        assert!((var - 0.25).abs() < 0.01, "var {var}");
    }

    #[test]
    fn segment_dual_gives_half_mass_at_zero() {
        let draws = sample_asymptotic(&canonical(0.5), &[0.5, 0.5], 50_000, 6)
            .unwrap()
            .values;
        let at_zero = draws.iter().filter(|&&x| x.abs() < 1e-9).count() as f64 / draws.len() as f64;
        assert!((at_zero - 0.5).abs() < 0.02, "{at_zero}");
        assert!(draws.iter().all(|&x| x <= 1e-9));
    }

    #[test]
    fn robustness_examples() {
        let a = canonical(0.2);
        let check = robustness_gap(&a, &a, &[0.5, 0.5], 1.0, 0.3, 1.0).unwrap();
        assert_eq!(check.gap, 0.0);
        assert!(check.holds);
        let doubled = robustness_gap(&a, &a, &[0.5, 0.5], 1.0, 0.6, 1.0).unwrap();
        assert!((doubled.bound - 2.0 * check.bound).abs() < 1e-15);
        assert!(robustness_gap(&canonical(0.0), &canonical(0.0), &[0.5, 0.5], 1.0, 0.1, 1.0).is_err());
    }
}
