//! Dense revised primal simplex for `max cᵀx  s.t.  Ax = b, x ≥ 0`.
//!
//! The constraint matrix is never materialized: callers expose columns
//! through [`ColumnSource`]. The basis inverse is kept dense and updated by
//! Gauss-Jordan pivots, with a fresh inversion every [`REFACTOR_EVERY`]
//! iterations. Pricing is Dantzig's rule with lowest-index tie-breaking;
//! after [`STALL_LIMIT`] consecutive degenerate pivots the solver switches to
//! Bland's rule until the objective moves again.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Feasibility tolerance used while pivoting.
pub(crate) const FEAS_TOL: f64 = 1e-9;
const PRICE_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const STALL_LIMIT: usize = 50;

pub(crate) trait ColumnSource {
    fn rows(&self) -> usize;
    fn columns(&self) -> usize;
    fn objective(&self, col: usize) -> f64;
    /// Writes column `col` of `A` into `out` (length `rows()`), overwriting it.
    fn load_column(&self, col: usize, out: &mut [f64]);
    /// `aᵀ y` for column `col`.
    fn dot(&self, col: usize, y: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
pub(crate) struct Optimum {
    /// Column index basic in each row position.
    pub basis: Vec<usize>,
    /// Values of the basic variables, aligned with `basis`.
    pub values: Vec<f64>,
    /// Simplex multipliers `y = c_Bᵀ B⁻¹`.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Outcome {
    Optimal(Optimum),
    Unbounded { entering: usize },
}

struct State<'a, P: ColumnSource> {
    lp: &'a P,
    rhs: &'a [f64],
    m: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    x: Vec<f64>,
    trace: VecDeque<(usize, usize, f64)>,
}

impl<'a, P: ColumnSource> State<'a, P> {
    fn refactor(&mut self, iterations: usize) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (pos, &c) in self.basis.iter().enumerate() {
            self.lp.load_column(c, &mut col);
            for r in 0..m {
                a[r * m + pos] = col[r];
            }
        }
        self.binv = invert(&mut a, m).ok_or_else(|| Error::Solver {
            iterations,
            reason: "singular basis".into(),
            trace: self.trace_string(),
        })?;
        for r in 0..m {
            self.x[r] = (0..m).map(|c| self.binv[r * m + c] * self.rhs[c]).sum();
        }
        Ok(())
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&c| self.lp.objective(c)).collect();
        (0..m)
            .map(|r| (0..m).map(|k| cb[k] * self.binv[k * m + r]).sum())
            .collect()
    }

    fn trace_string(&self) -> String {
        self.trace
            .iter()
            .map(|(enter, leave, step)| format!("+{enter}/-{leave}@{step:.3e}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Runs the simplex method from a primal-feasible starting basis.
pub(crate) fn maximize<P: ColumnSource>(lp: &P, rhs: &[f64], basis: Vec<usize>) -> Result<Outcome> {
    let m = lp.rows();
    let n = lp.columns();
    assert_eq!(rhs.len(), m);
    assert_eq!(basis.len(), m);
    let mut is_basic = vec![false; n];
    for &c in &basis {
        is_basic[c] = true;
    }
    let mut st = State {
        lp,
        rhs,
        m,
        basis,
        is_basic,
        binv: Vec::new(),
        x: vec![0.0; m],
        trace: VecDeque::with_capacity(16),
    };
    st.refactor(0)?;
    if let Some(r) = (0..m).find(|&r| st.x[r] < -FEAS_TOL) {
        return Err(Error::Solver {
            iterations: 0,
            reason: format!("starting basis infeasible in row {r} ({:e})", st.x[r]),
            trace: String::new(),
        });
    }

    let max_iterations = 50 * (m + n) + 1000;
    let mut col = vec![0.0; m];
    let mut u = vec![0.0; m];
    let mut degenerate_run = 0usize;
    let mut bland = false;
    let mut since_refactor = 0usize;

    for iteration in 0..max_iterations {
        let y = st.duals();

        // pricing
        let mut entering = None;
        let mut best = PRICE_TOL;
        for j in 0..n {
            if st.is_basic[j] {
                continue;
            }
            let d = lp.objective(j) - lp.dot(j, &y);
            if d > best {
                entering = Some(j);
                if bland {
                    break;
                }
                best = d;
            }
        }
        let Some(q) = entering else {
            st.refactor(iteration)?;
            for v in st.x.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let duals = st.duals();
            let objective = st.basis.iter().zip(&st.x).map(|(&c, &v)| lp.objective(c) * v).sum();
            return Ok(Outcome::Optimal(Optimum {
                basis: st.basis,
                values: st.x,
                duals,
                objective,
                iterations: iteration,
            }));
        };

        lp.load_column(q, &mut col);
        for (k, uk) in u.iter_mut().enumerate() {
            *uk = (0..m).map(|r| st.binv[k * m + r] * col[r]).sum();
        }

        // ratio test, ties to the lowest basic column index
        let mut leave: Option<usize> = None;
        let mut theta = f64::INFINITY;
        for k in 0..m {
            if u[k] > PIVOT_TOL {
                let ratio = st.x[k].max(0.0) / u[k];
                let better = match leave {
                    None => true,
                    Some(l) => ratio < theta - 1e-12 || (ratio <= theta + 1e-12 && st.basis[k] < st.basis[l]),
                };
                if better {
                    leave = Some(k);
                    theta = ratio;
                }
            }
        }
        let Some(r) = leave else {
            return Ok(Outcome::Unbounded { entering: q });
        };

        if theta <= 1e-12 {
            degenerate_run += 1;
            if degenerate_run > STALL_LIMIT {
                bland = true;
            }
        } else {
            degenerate_run = 0;
            bland = false;
        }

        for k in 0..m {
            st.x[k] -= theta * u[k];
        }
        st.x[r] = theta;
        let pivot = u[r];
        for c in 0..m {
            st.binv[r * m + c] /= pivot;
        }
        for k in 0..m {
            if k != r && u[k] != 0.0 {
                let factor = u[k];
                for c in 0..m {
                    st.binv[k * m + c] -= factor * st.binv[r * m + c];
                }
            }
        }
        let leaving = st.basis[r];
        st.is_basic[leaving] = false;
        st.is_basic[q] = true;
        st.basis[r] = q;
        if st.trace.len() == 16 {
            st.trace.pop_front();
        }
        st.trace.push_back((q, leaving, theta));

        since_refactor += 1;
        if since_refactor >= REFACTOR_EVERY {
            st.refactor(iteration)?;
            since_refactor = 0;
        }
    }

    Err(Error::Solver {
        iterations: max_iterations,
        reason: "iteration limit reached".into(),
        trace: st.trace_string(),
    })
}

/// Gauss-Jordan inversion with partial pivoting of a row-major `m×m` matrix.
fn invert(a: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-12 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(p * m + k, c * m + k);
                inv.swap(p * m + k, c * m + k);
            }
        }
        let d = a[c * m + c];
        for k in 0..m {
            a[c * m + k] /= d;
            inv[c * m + k] /= d;
        }
        for r in 0..m {
            if r != c {
                let f = a[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
    }
    Some(inv)
}
