//! Where the adversarial transport moves mass, and group-fairness metrics
//! for comparison.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::LpSolution;
use crate::sample_space::{EmpiricalDistribution, FiniteSampleSpace};

const FLOW_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Flow {
    pub source: usize,
    pub destination: usize,
    pub mass: f64,
    pub count: f64,
}

/// Net change per sample point of the adversarial distribution relative to
/// the audit distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportDiff {
    pub n: u64,
    /// `(Πᵀ1)_k − f_k`.
    pub mass_change: Vec<f64>,
    /// `n · mass_change`.
    pub count_change: Vec<f64>,
    /// `count_change` rounded by largest remainder; sums to zero.
    pub rounded: Vec<i64>,
    pub flows: Vec<Flow>,
}

pub fn transport_diff(
    solution: &LpSolution,
    space: &FiniteSampleSpace,
    f_n: &EmpiricalDistribution,
) -> Result<TransportDiff> {
    let k = space.len();
    if solution.plan.matrix.nrows() != k || f_n.probabilities().len() != k {
        return Err(Error::InvalidInput(
            "solution, space and distribution disagree on K".into(),
        ));
    }
    let n = f_n.n();
    let scale = n as f64;
    let mass_change: Vec<f64> = solution
        .plan
        .column_sums()
        .iter()
        .zip(f_n.probabilities())
        .map(|(c, f)| c - f)
        .collect();
    let count_change: Vec<f64> = mass_change.iter().map(|m| m * scale).collect();
    let rounded = largest_remainder(&count_change);
    let mut flows = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let mass = solution.plan.matrix[(i, j)];
            if i != j && mass > FLOW_THRESHOLD {
                flows.push(Flow {
                    source: i,
                    destination: j,
                    mass,
                    count: mass * scale,
                });
            }
        }
    }
    Ok(TransportDiff {
        n,
        mass_change,
        count_change,
        rounded,
        flows,
    })
}

/// Rounds to integers whose total equals the rounded total of `values`.
/// Units go to the largest fractional parts, ties to the lower index.
pub fn largest_remainder(values: &[f64]) -> Vec<i64> {
    let target = values.iter().sum::<f64>().round() as i64;
    let mut out: Vec<i64> = values.iter().map(|v| v.floor() as i64).collect();
    let mut shortfall = target - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = values[a] - values[a].floor();
        let fb = values[b] - values[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    // shortfall is within [0, len] because the fractional parts sum to it
    for &i in order.iter().cycle().take(values.len().max(1) * 2) {
        if shortfall <= 0 {
            break;
        }
        out[i] += 1;
        shortfall -= 1;
    }
    out
}

/// Cross-tabulated net count changes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Heatmap {
    pub row_features: Vec<String>,
    pub col_features: Vec<String>,
    pub label: Option<String>,
    pub row_headers: Vec<String>,
    pub col_headers: Vec<String>,
    /// Real-valued aggregated changes, `[row][col]`.
    pub mass: Vec<Vec<f64>>,
    /// Largest-remainder rounding of `mass` over the whole grid.
    pub counts: Vec<Vec<i64>>,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let corner = format!(
            "{}\\{}",
            join_or_all(&self.row_features),
            join_or_all(&self.col_features)
        );
        let mut out = String::new();
        out.push_str(&csv_field(&corner));
        for h in &self.col_headers {
            out.push(',');
            out.push_str(&csv_field(h));
        }
        out.push('\n');
        for (h, row) in self.row_headers.iter().zip(&self.counts) {
            out.push_str(&csv_field(h));
            for c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn total(&self) -> i64 {
        self.counts.iter().flatten().sum()
    }
}

fn join_or_all(features: &[String]) -> String {
    if features.is_empty() {
        "all".into()
    } else {
        features.join("|")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Resolves feature names to schema indices in declaration order.
fn resolve(space: &FiniteSampleSpace, names: &[&str]) -> Result<Vec<usize>> {
    let mut idx = names
        .iter()
        .map(|n| {
            space
                .schema()
                .feature_index(n)
                .ok_or_else(|| Error::Schema(format!("unknown feature `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Headers and per-point cell index for a feature cross-product.
fn axis(space: &FiniteSampleSpace, features: &[usize]) -> (Vec<String>, Vec<usize>) {
    let domains = space.schema().domains();
    let sizes: Vec<usize> = features.iter().map(|&f| domains[f].len()).collect();
    let total: usize = sizes.iter().product();
    let headers = (0..total)
        .map(|mut cell| {
            if features.is_empty() {
                return "all".to_string();
            }
            let mut parts = vec![String::new(); features.len()];
            for pos in (0..features.len()).rev() {
                parts[pos] = domains[features[pos]][cell % sizes[pos]].clone();
                cell /= sizes[pos];
            }
            parts.join("|")
        })
        .collect();
    let cells = space
        .points()
        .iter()
        .map(|p| {
            features
                .iter()
                .zip(&sizes)
                .fold(0, |acc, (&f, &s)| acc * s + p.features[f])
        })
        .collect();
    (headers, cells)
}

/// Aggregates net count changes of points with original label `label`
/// (all points if `None`) over a row × column feature cross-tabulation.
/// Header values follow schema declaration order.
pub fn marginal_heatmap(
    diff: &TransportDiff,
    space: &FiniteSampleSpace,
    row_features: &[&str],
    col_features: &[&str],
    label: Option<&str>,
) -> Result<Heatmap> {
    let rows = resolve(space, row_features)?;
    let cols = resolve(space, col_features)?;
    let overlap: BTreeSet<_> = rows.iter().filter(|r| cols.contains(r)).collect();
    if !overlap.is_empty() {
        return Err(Error::InvalidInput(
            "a feature cannot be both a row and a column".into(),
        ));
    }
    let label_idx = label
        .map(|l| {
            space
                .schema()
                .label_index(l)
                .ok_or_else(|| Error::Schema(format!("unknown label `{l}`")))
        })
        .transpose()?;
    if diff.count_change.len() != space.len() {
        return Err(Error::InvalidInput(
            "transport diff does not match the sample space".into(),
        ));
    }

    let (row_headers, row_cell) = axis(space, &rows);
    let (col_headers, col_cell) = axis(space, &cols);
    let width = col_headers.len();
    let mut flat = vec![0.0; row_headers.len() * width];
    for (k, point) in space.points().iter().enumerate() {
        if label_idx.is_some_and(|l| l != point.label) {
            continue;
        }
        flat[row_cell[k] * width + col_cell[k]] += diff.count_change[k];
    }
    let rounded = largest_remainder(&flat);
    let names = |idx: &[usize]| idx.iter().map(|&i| space.schema().features[i].name.clone()).collect();
    Ok(Heatmap {
        row_features: names(&rows),
        col_features: names(&cols),
        label: label.map(str::to_string),
        mass: flat.chunks(width).map(<[f64]>::to_vec).collect(),
        counts: rounded.chunks(width).map(<[i64]>::to_vec).collect(),
        row_headers,
        col_headers,
    })
}

/// One audited prediction for group metrics. `label` and `predicted` are
/// true for the favorable/positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupOutcome {
    pub privileged: bool,
    pub label: bool,
    pub predicted: bool,
}

/// Statistical parity, equal opportunity and average odds differences,
/// unprivileged minus privileged. `None` when a conditioning cell is empty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub spd: Option<f64>,
    pub eod: Option<f64>,
    pub aod: Option<f64>,
}

#[derive(Default)]
struct Tally {
    total: u64,
    predicted_pos: u64,
    pos: u64,
    true_pos: u64,
    neg: u64,
    false_pos: u64,
}

impl Tally {
    fn add(&mut self, o: &GroupOutcome) {
        self.total += 1;
        self.predicted_pos += o.predicted as u64;
        if o.label {
            self.pos += 1;
            self.true_pos += o.predicted as u64;
        } else {
            self.neg += 1;
            self.false_pos += o.predicted as u64;
        }
    }

    fn rate(num: u64, den: u64) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    fn selection_rate(&self) -> Option<f64> {
        Self::rate(self.predicted_pos, self.total)
    }

    fn tpr(&self) -> Option<f64> {
        Self::rate(self.true_pos, self.pos)
    }

    fn fpr(&self) -> Option<f64> {
        Self::rate(self.false_pos, self.neg)
    }
}

pub fn group_fairness_metrics(outcomes: &[GroupOutcome]) -> GroupMetrics {
    let mut privileged = Tally::default();
    let mut unprivileged = Tally::default();
    for o in outcomes {
        if o.privileged {
            privileged.add(o);
        } else {
            unprivileged.add(o);
        }
    }
    let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    let spd = diff(unprivileged.selection_rate(), privileged.selection_rate());
    let eod = diff(unprivileged.tpr(), privileged.tpr());
    let fpr_diff = diff(unprivileged.fpr(), privileged.fpr());
    let aod = eod.zip(fpr_diff).map(|(t, f)| 0.5 * (t + f));
    GroupMetrics { spd, eod, aod }
}
