//! The auditor's transport LP over a finite sample space.
//!
//! ```text
//! ψ(f) = max_{Π ≥ 0}  lᵀ(Πᵀ1 − f)
//!        s.t.  ⟨C, Π⟩ ≤ ε,   ⟨D, Π⟩ = 0,   Π1 = f
//! ```
//!
//! Forbidden entries (`D_ij = 1`) are dropped from the variable set, leaving
//! K marginal rows plus one budget row. The starting basis is the diagonal
//! plan plus the budget slack, whose basis matrix is the identity.
//!
//! Dual certificates use the Lagrangian convention
//! `ν, μ ≥ 0`, `λ_i + νC_ij + μD_ij ≥ l_j`, with `εν + fᵀλ − lᵀf = ψ(f)`.
//! [`DualCertificate::negated`] returns `(−ν, −μ, −λ)`, which satisfies
//! `νC + μD + λ1ᵀ ⪯ −1lᵀ` entrywise.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sample_space::CostStructure;
use crate::simplex::{self, ColumnSource, Outcome};

/// Tolerance for the public plan and certificate invariants.
pub const INVARIANT_TOL: f64 = 1e-8;
/// Simplex tolerance on `f`.
const SIMPLEX_TOL: f64 = 1e-10;
const UNIQUENESS_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct AuditProblem {
    loss: Vec<f64>,
    costs: CostStructure,
    epsilon: f64,
}

impl AuditProblem {
    pub fn new(loss: Vec<f64>, costs: CostStructure, epsilon: f64) -> Result<Self> {
        if loss.len() != costs.len() {
            return Err(Error::InvalidInput(format!(
                "loss has {} entries for {} sample points",
                loss.len(),
                costs.len()
            )));
        }
        if loss.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidInput("losses must be finite and nonnegative".into()));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidInput("epsilon must be finite and nonnegative".into()));
        }
        Ok(Self { loss, costs, epsilon })
    }

    /// Convenience constructor from raw matrices; validates them as a [`CostStructure`].
    pub fn from_matrices(loss: Vec<f64>, cost: DMatrix<f64>, forbidden: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        Self::new(loss, CostStructure::new(cost, forbidden)?, epsilon)
    }

    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    pub fn costs(&self) -> &CostStructure {
        &self.costs
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.costs.cost
    }

    pub fn forbidden(&self) -> &DMatrix<f64> {
        &self.costs.forbidden
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.loss.clone(), self.costs.clone(), epsilon)
    }

    pub fn with_costs(&self, costs: CostStructure) -> Result<Self> {
        Self::new(self.loss.clone(), costs, self.epsilon)
    }

    /// Admissible (i, j) pairs in row-major order.
    fn allowed_pairs(&self) -> Vec<(usize, usize)> {
        let k = self.len();
        (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .filter(|&(i, j)| !self.costs.is_forbidden(i, j))
            .collect()
    }

    fn check_distribution(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "distribution has {} entries for {} sample points",
                f.len(),
                self.len()
            )));
        }
        if f.iter().any(|p| !p.is_finite() || *p < -SIMPLEX_TOL) {
            return Err(Error::InvalidInput("distribution has a negative entry".into()));
        }
        let total: f64 = f.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("distribution sums to {total}, not 1")));
        }
        Ok(f.iter().map(|p| p.max(0.0)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportPlan {
    pub matrix: DMatrix<f64>,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.sum()).collect()
    }

    pub fn transport_cost(&self, cost: &DMatrix<f64>) -> f64 {
        self.matrix.component_mul(cost).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualCertificate {
    /// Budget multiplier.
    pub nu: f64,
    /// Smallest `μ ≥ 0` that makes the eliminated (forbidden) entries feasible.
    pub mu: f64,
    /// Marginal multipliers.
    pub lambda: Vec<f64>,
}

impl DualCertificate {
    /// `εν + fᵀλ`, the optimum of `max lᵀΠᵀ1` before subtracting `lᵀf`.
    pub fn objective(&self, epsilon: f64, f: &[f64]) -> f64 {
        epsilon * self.nu + self.lambda.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest violation of `λ_i + νC_ij + μD_ij ≥ l_j` and of `ν, μ ≥ 0`.
    pub fn max_violation(&self, problem: &AuditProblem) -> f64 {
        let k = problem.len();
        let mut worst = (-self.nu).max(-self.mu).max(0.0);
        for i in 0..k {
            for j in 0..k {
                let lhs = self.lambda[i] + self.nu * problem.cost()[(i, j)] + self.mu * problem.forbidden()[(i, j)];
                worst = worst.max(problem.loss()[j] - lhs);
            }
        }
        worst
    }

    /// `(−ν, −μ, −λ)`: the sign convention in which feasibility reads
    /// `νC + μD + λ1ᵀ ⪯ −1lᵀ`.
    pub fn negated(&self) -> (f64, f64, Vec<f64>) {
        (-self.nu, -self.mu, self.lambda.iter().map(|v| -v).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LpSolution {
    pub value: f64,
    pub plan: TransportPlan,
    pub dual: DualCertificate,
    pub budget_active: bool,
    pub iterations: usize,
}

impl LpSolution {
    /// `εν + fᵀλ`; pass this to [`optimize_over_dual_face`].
    pub fn dual_objective(&self, problem: &AuditProblem, f: &[f64]) -> f64 {
        self.dual.objective(problem.epsilon(), f)
    }
}

/// Column layout shared by the primal LP and the dual-face LP.
///
/// Rows `0..K` are the marginals, row `K` the budget. Columns are the allowed
/// pairs followed by `extra` dense columns.
struct TransportColumns<'a> {
    problem: &'a AuditProblem,
    pairs: Vec<(usize, usize)>,
    extra: Vec<(Vec<f64>, f64)>,
}

impl ColumnSource for TransportColumns<'_> {
    fn rows(&self) -> usize {
        self.problem.len() + 1
    }

    fn columns(&self) -> usize {
        self.pairs.len() + self.extra.len()
    }

    fn objective(&self, col: usize) -> f64 {
        match self.pairs.get(col) {
            Some(&(_, j)) => self.problem.loss[j],
            None => self.extra[col - self.pairs.len()].1,
        }
    }

    fn load_column(&self, col: usize, out: &mut [f64]) {
        match self.pairs.get(col) {
            Some(&(i, j)) => {
                out.fill(0.0);
                out[i] = 1.0;
                out[self.problem.len()] += self.problem.cost()[(i, j)];
            }
            None => out.copy_from_slice(&self.extra[col - self.pairs.len()].0),
        }
    }

    fn dot(&self, col: usize, y: &[f64]) -> f64 {
        match self.pairs.get(col) {
            Some(&(i, j)) => y[i] + self.problem.cost()[(i, j)] * y[self.problem.len()],
            None => self.extra[col - self.pairs.len()]
                .0
                .iter()
                .zip(y)
                .map(|(a, b)| a * b)
                .sum(),
        }
    }
}

fn diagonal_positions(problem: &AuditProblem, pairs: &[(usize, usize)]) -> Result<Vec<usize>> {
    (0..problem.len())
        .map(|i| {
            pairs
                .binary_search(&(i, i))
                .map_err(|_| Error::InfeasibleMarginals { row: i })
        })
        .collect()
}

/// Solves the auditor's LP exactly at base distribution `f`.
pub fn solve_audit_lp(problem: &AuditProblem, f: &[f64]) -> Result<LpSolution> {
    let f = problem.check_distribution(f)?;
    let k = problem.len();
    let pairs = problem.allowed_pairs();
    let diag = diagonal_positions(problem, &pairs)?;
    let mut slack = vec![0.0; k + 1];
    slack[k] = 1.0;
    let columns = TransportColumns {
        problem,
        pairs,
        extra: vec![(slack, 0.0)],
    };
    let slack_col = columns.pairs.len();
    let mut basis = diag;
    basis.push(slack_col);
    let mut rhs = f.clone();
    rhs.push(problem.epsilon());

    let opt = match simplex::maximize(&columns, &rhs, basis)? {
        Outcome::Optimal(opt) => opt,
        Outcome::Unbounded { entering } => {
            return Err(Error::Solver {
                iterations: 0,
                reason: format!("primal unbounded at column {entering}, impossible for a bounded transport polytope"),
                trace: String::new(),
            })
        }
    };

    let mut matrix = DMatrix::zeros(k, k);
    for (&col, &v) in opt.basis.iter().zip(&opt.values) {
        if let Some(&(i, j)) = columns.pairs.get(col) {
            matrix[(i, j)] = v;
        }
    }
    let plan = TransportPlan { matrix };
    let lambda = opt.duals[..k].to_vec();
    let nu = opt.duals[k].max(0.0);
    let mut mu: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            if problem.costs.is_forbidden(i, j) {
                mu = mu.max(problem.loss[j] - lambda[i] - nu * problem.cost()[(i, j)]);
            }
        }
    }
    let moved: f64 = plan.column_sums().iter().zip(&problem.loss).map(|(p, l)| p * l).sum();
    let baseline: f64 = f.iter().zip(&problem.loss).map(|(p, l)| p * l).sum();
    let value = (moved - baseline).max(0.0);
    let budget_active = (problem.epsilon() - plan.transport_cost(problem.cost())).abs() <= INVARIANT_TOL;
    Ok(LpSolution {
        value,
        plan,
        dual: DualCertificate { nu, mu, lambda },
        budget_active,
        iterations: opt.iterations,
    })
}

/// Minimizes `(λ − l)ᵀh` over the dual optimal face Λ at `f`, which is the
/// directional derivative `ψ'_f(h)`.
///
/// `dual_optimum` is `εν + fᵀλ` from [`solve_audit_lp`] on the same inputs.
/// The face LP is solved through its dual, a transport-shaped program with
/// the same rows:
///
/// ```text
/// max Σ l_j Π_ij − V τ   s.t.  Π1 − τ f = h,   ⟨C,Π⟩ − τ ε + s = 0,   Π, τ, s ≥ 0
/// ```
pub fn optimize_over_dual_face(problem: &AuditProblem, f: &[f64], direction: &[f64], dual_optimum: f64) -> Result<f64> {
    let f = problem.check_distribution(f)?;
    let k = problem.len();
    if direction.len() != k || direction.iter().any(|h| !h.is_finite()) {
        return Err(Error::InvalidInput("direction must be a finite K-vector".into()));
    }
    if direction.iter().all(|&h| h == 0.0) {
        return Ok(0.0);
    }
    // The equality εν + fᵀλ = V is relaxed to ≤ V + tol so rounding in V
    // cannot empty the face.
    let bound = dual_optimum + 1e-12 * dual_optimum.abs().max(1.0);

    // Starting basis: diagonal plan scaled by τ large enough to cover negative h.
    let mut tau = 0.0f64;
    let mut tau_row = None;
    for (i, (&h, &p)) in direction.iter().zip(&f).enumerate() {
        if h < 0.0 {
            if p <= 0.0 {
                return Err(Error::Degeneracy(format!(
                    "direction decreases coordinate {i} where f has no mass"
                )));
            }
            let need = -h / p;
            if need > tau {
                tau = need;
                tau_row = Some(i);
            }
        }
    }

    let pairs = problem.allowed_pairs();
    let diag = diagonal_positions(problem, &pairs)?;
    let mut tau_col: Vec<f64> = f.iter().map(|p| -p).collect();
    tau_col.push(-problem.epsilon());
    let mut slack = vec![0.0; k + 1];
    slack[k] = 1.0;
    let columns = TransportColumns {
        problem,
        pairs,
        extra: vec![(tau_col, -bound), (slack, 0.0)],
    };
    let tau_index = columns.pairs.len();
    let slack_index = tau_index + 1;
    let mut basis = diag;
    if let Some(r) = tau_row {
        basis[r] = tau_index;
    }
    basis.push(slack_index);
    let mut rhs = direction.to_vec();
    rhs.push(0.0);

    match simplex::maximize(&columns, &rhs, basis)? {
        Outcome::Optimal(opt) => {
            let shift: f64 = problem.loss.iter().zip(direction).map(|(l, h)| l * h).sum();
            let value = opt.objective - shift;
            // the relaxed bound costs up to τ·tol; treat that residue as an exact zero
            let h_norm: f64 = direction.iter().map(|h| h.abs()).sum();
            let noise = 1e-10 * (1.0 + h_norm) * dual_optimum.abs().max(1.0);
            Ok(if value.abs() <= noise { 0.0 } else { value })
        }
        Outcome::Unbounded { .. } => Err(Error::Degeneracy(
            "dual optimal face is empty; the supplied dual optimum is not tight".into(),
        )),
    }
}

/// Spread `max − min` of `λ_k` over Λ for each coordinate in the support of `f`.
/// Coordinates with `f_k = 0` carry no sampling noise and are skipped.
pub fn dual_spread(problem: &AuditProblem, f: &[f64]) -> Result<Vec<(usize, f64)>> {
    let solution = solve_audit_lp(problem, f)?;
    let v = solution.dual_objective(problem, f);
    let k = problem.len();
    let mut out = Vec::new();
    for idx in (0..k).filter(|&i| f[i] > 0.0) {
        let mut h = vec![0.0; k];
        h[idx] = 1.0;
        let low = optimize_over_dual_face(problem, f, &h, v)?;
        h[idx] = -1.0;
        let high = -optimize_over_dual_face(problem, f, &h, v)?;
        out.push((idx, high - low));
    }
    Ok(out)
}

/// Whether the marginal multipliers of the dual optimal face are unique
/// (the Gaussian regime of the FaiTH statistic).
pub fn is_dual_unique(problem: &AuditProblem, f: &[f64]) -> Result<bool> {
    Ok(dual_spread(problem, f)?.iter().all(|&(_, s)| s <= UNIQUENESS_TOL))
}
