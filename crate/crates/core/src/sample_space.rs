//! Finite sample space, empirical distribution and transport costs.
//!
//! Points are the distinct (feature cell, label) pairs of an audit data set.
//! They are kept in lexicographic order of their domain indices (features in
//! schema order, label last), so the space does not depend on record order.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A feature column. Exactly one of `values` (categorical) or `edges`
/// (bucketed numeric) is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
}

impl FeatureDef {
    pub fn categorical(name: impl Into<String>, values: &[&str]) -> Self {
        Self {
            name: name.into(),
            values: Some(values.iter().map(|v| v.to_string()).collect()),
            edges: None,
        }
    }

    pub fn bucketed(name: impl Into<String>, edges: &[f64]) -> Self {
        Self {
            name: name.into(),
            values: None,
            edges: Some(edges.to_vec()),
        }
    }

    pub fn is_bucketed(&self) -> bool {
        self.edges.is_some()
    }

    /// Domain values in declaration order. Bucketed features expose their
    /// bucket labels.
    pub fn domain(&self) -> Vec<String> {
        match (&self.values, &self.edges) {
            (Some(values), _) => values.clone(),
            (None, Some(edges)) => (0..=edges.len()).map(|b| bucket_name(edges, b)).collect(),
            (None, None) => Vec::new(),
        }
    }
}

fn fmt_edge(x: f64) -> String {
    format!("{x}")
}

fn bucket_name(edges: &[f64], bucket: usize) -> String {
    if bucket == 0 {
        format!("<{}", fmt_edge(edges[0]))
    } else if bucket == edges.len() {
        format!("≥{}", fmt_edge(edges[edges.len() - 1]))
    } else {
        format!("{}–{}", fmt_edge(edges[bucket - 1]), fmt_edge(edges[bucket]))
    }
}

/// Buckets are left-closed: `x` falls in `[edges[b-1], edges[b])`.
pub fn bucket_label(edges: &[f64], x: f64) -> String {
    let bucket = edges.iter().take_while(|&&e| e <= x).count();
    bucket_name(edges, bucket)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub features: Vec<FeatureDef>,
    pub labels: Vec<String>,
}

impl Schema {
    pub fn new(features: Vec<FeatureDef>, labels: &[&str]) -> Result<Self> {
        let schema = Self {
            features,
            labels: labels.iter().map(|l| l.to_string()).collect(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for feature in &self.features {
            if !names.insert(feature.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", feature.name)));
            }
            if matches!(feature.name.as_str(), "label" | "prediction" | "loss") {
                return Err(Error::Schema(format!("reserved feature name `{}`", feature.name)));
            }
            match (&feature.values, &feature.edges) {
                (Some(values), None) => {
                    if values.is_empty() {
                        return Err(Error::Schema(format!("feature `{}` has an empty domain", feature.name)));
                    }
                    let distinct: BTreeSet<_> = values.iter().collect();
                    if distinct.len() != values.len() {
                        return Err(Error::Schema(format!("feature `{}` repeats a value", feature.name)));
                    }
                }
                (None, Some(edges)) => {
                    if edges.is_empty() || edges.iter().any(|e| !e.is_finite()) {
                        return Err(Error::Schema(format!(
                            "feature `{}` needs finite bucket edges",
                            feature.name
                        )));
                    }
                    if edges.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Schema(format!(
                            "bucket edges of `{}` must be strictly increasing",
                            feature.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "feature `{}` must declare exactly one of `values` or `edges`",
                        feature.name
                    )))
                }
            }
        }
        if self.labels.is_empty() {
            return Err(Error::Schema("empty label set".into()));
        }
        let distinct: BTreeSet<_> = self.labels.iter().collect();
        if distinct.len() != self.labels.len() {
            return Err(Error::Schema("label set repeats a value".into()));
        }
        Ok(())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn domains(&self) -> Vec<Vec<String>> {
        self.features.iter().map(FeatureDef::domain).collect()
    }

    /// Number of points in the full Cartesian product of feature domains and labels.
    pub fn cardinality(&self) -> usize {
        self.domains().iter().map(Vec::len).product::<usize>() * self.labels.len()
    }

    /// Maps feature values (already bucketed) and a label to domain indices.
    pub fn encode(&self, features: &[String], label: &str) -> Result<(Vec<usize>, usize)> {
        if features.len() != self.features.len() {
            return Err(Error::Schema(format!(
                "expected {} feature values, got {}",
                self.features.len(),
                features.len()
            )));
        }
        let domains = self.domains();
        let cell = features
            .iter()
            .zip(&domains)
            .zip(&self.features)
            .map(|((value, domain), def)| {
                domain
                    .iter()
                    .position(|d| d == value)
                    .ok_or_else(|| Error::Schema(format!("value `{value}` is not in the domain of `{}`", def.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = self
            .label_index(label)
            .ok_or_else(|| Error::Schema(format!("label `{label}` is not in the label set")))?;
        Ok((cell, label))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SamplePoint {
    pub id: usize,
    /// Domain index of each feature, in schema order.
    pub features: Vec<usize>,
    pub label: usize,
}

#[derive(Clone, Debug)]
pub struct FiniteSampleSpace {
    schema: Arc<Schema>,
    points: Vec<SamplePoint>,
}

impl FiniteSampleSpace {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn find(&self, features: &[usize], label: usize) -> Option<usize> {
        self.points
            .binary_search_by(|p| (p.features.as_slice(), p.label).cmp(&(features, label)))
            .ok()
    }

    /// Human-readable feature values and label of a point.
    pub fn describe(&self, id: usize) -> (Vec<String>, String) {
        let point = &self.points[id];
        let domains = self.schema.domains();
        let values = point
            .features
            .iter()
            .zip(&domains)
            .map(|(&v, d)| d[v].clone())
            .collect();
        (values, self.schema.labels[point.label].clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
    n: u64,
    probabilities: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let probabilities = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Self {
            counts,
            n,
            probabilities,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// Builds the sample space from observed (features, label) records.
///
/// With `complete`, every cell of the Cartesian product of feature domains
/// and labels is present, unobserved cells with count zero.
pub fn build_space<'a, I>(
    records: I,
    schema: &Schema,
    complete: bool,
) -> Result<(FiniteSampleSpace, EmpiricalDistribution)>
where
    I: IntoIterator<Item = (&'a [String], &'a str)>,
{
    schema.validate()?;
    let mut tally: BTreeMap<(Vec<usize>, usize), u64> = BTreeMap::new();
    for (features, label) in records {
        *tally.entry(schema.encode(features, label)?).or_default() += 1;
    }
    if tally.is_empty() {
        return Err(Error::EmptyData);
    }

    let keys: Vec<(Vec<usize>, usize)> = if complete {
        cartesian(schema)
    } else {
        tally.keys().cloned().collect()
    };
    if keys.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "sample space needs at least 2 points, found {}",
            keys.len()
        )));
    }
    let counts = keys.iter().map(|k| tally.get(k).copied().unwrap_or(0)).collect();
    let points = keys
        .into_iter()
        .enumerate()
        .map(|(id, (features, label))| SamplePoint { id, features, label })
        .collect();
    let space = FiniteSampleSpace {
        schema: Arc::new(schema.clone()),
        points,
    };
    Ok((space, EmpiricalDistribution::from_counts(counts)?))
}

fn cartesian(schema: &Schema) -> Vec<(Vec<usize>, usize)> {
    let sizes: Vec<usize> = schema.domains().iter().map(Vec::len).collect();
    let mut out = Vec::with_capacity(schema.cardinality());
    let mut cell = vec![0usize; sizes.len()];
    loop {
        for label in 0..schema.labels.len() {
            out.push((cell.clone(), label));
        }
        // odometer increment, last feature fastest
        let mut pos = sizes.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            cell[pos] += 1;
            if cell[pos] < sizes[pos] {
                break;
            }
            cell[pos] = 0;
        }
    }
}

/// Feature-level similarity. A mismatch on a feature in `zero_cost_features`
/// is free, a mismatch on a feature listed in `feature_costs` adds that cost to
/// the feature distance, and a mismatch on any other feature forbids the move.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilaritySpec {
    #[serde(default)]
    pub zero_cost_features: Vec<String>,
    #[serde(default)]
    pub feature_costs: BTreeMap<String, f64>,
    #[serde(default)]
    pub forbidden_features: Vec<String>,
    #[serde(default = "default_true")]
    pub forbid_label_change: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum FeatureRule {
    Free,
    Cost(f64),
    Forbid,
}

impl SimilaritySpec {
    pub fn zero_cost(features: &[&str]) -> Self {
        Self {
            zero_cost_features: features.iter().map(|f| f.to_string()).collect(),
            forbid_label_change: true,
            ..Self::default()
        }
    }

    fn rules(&self, schema: &Schema) -> Result<Vec<FeatureRule>> {
        if !self.forbid_label_change {
            return Err(Error::Schema("label changes are always forbidden".into()));
        }
        let mut rules = vec![None; schema.features.len()];
        let mut assign = |name: &str, rule: FeatureRule| -> Result<()> {
            let idx = schema
                .feature_index(name)
                .ok_or_else(|| Error::Schema(format!("similarity names unknown feature `{name}`")))?;
            if rules[idx].replace(rule).is_some() {
                return Err(Error::Schema(format!(
                    "feature `{name}` has more than one similarity rule"
                )));
            }
            Ok(())
        };
        for name in &self.zero_cost_features {
            assign(name, FeatureRule::Free)?;
        }
        for (name, &cost) in &self.feature_costs {
            if !cost.is_finite() || cost < 0.0 {
                return Err(Error::Schema(format!(
                    "cost of `{name}` must be finite and nonnegative"
                )));
            }
            assign(name, FeatureRule::Cost(cost))?;
        }
        for name in &self.forbidden_features {
            assign(name, FeatureRule::Forbid)?;
        }
        Ok(rules.into_iter().map(|r| r.unwrap_or(FeatureRule::Forbid)).collect())
    }
}

/// Transport cost `C` (finite everywhere) and forbidden-move indicator `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostStructure {
    pub cost: DMatrix<f64>,
    pub forbidden: DMatrix<f64>,
}

impl CostStructure {
    /// Validates symmetry, zero diagonals, finiteness and the 0/1 pattern of `D`.
    pub fn new(cost: DMatrix<f64>, forbidden: DMatrix<f64>) -> Result<Self> {
        let k = cost.nrows();
        if cost.ncols() != k || forbidden.nrows() != k || forbidden.ncols() != k {
            return Err(Error::InvalidInput("cost and indicator matrices must be K×K".into()));
        }
        for i in 0..k {
            if cost[(i, i)] != 0.0 || forbidden[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..k {
                let c = cost[(i, j)];
                let d = forbidden[(i, j)];
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "C[{i},{j}] must be finite and nonnegative"
                    )));
                }
                if d != 0.0 && d != 1.0 {
                    return Err(Error::InvalidInput(format!("D[{i},{j}] must be 0 or 1")));
                }
                if c != cost[(j, i)] || d != forbidden[(j, i)] {
                    return Err(Error::InvalidInput(format!("asymmetric entry at ({i},{j})")));
                }
            }
        }
        Ok(Self { cost, forbidden })
    }

    pub fn len(&self) -> usize {
        self.cost.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_forbidden(&self, i: usize, j: usize) -> bool {
        self.forbidden[(i, j)] != 0.0
    }
}

/// Squared feature distance for same-label pairs; forbidden pairs get
/// `D = 1` and `C = 0`.
pub fn build_costs(space: &FiniteSampleSpace, spec: &SimilaritySpec) -> Result<CostStructure> {
    let rules = spec.rules(space.schema())?;
    let k = space.len();
    let mut cost = DMatrix::zeros(k, k);
    let mut forbidden = DMatrix::zeros(k, k);
    for (i, a) in space.points().iter().enumerate() {
        for (j, b) in space.points().iter().enumerate().skip(i + 1) {
            let mut dist = Some(0.0);
            if a.label != b.label {
                dist = None;
            } else {
                for ((fa, fb), rule) in a.features.iter().zip(&b.features).zip(&rules) {
                    if fa == fb {
                        continue;
                    }
                    match rule {
                        FeatureRule::Free => {}
                        FeatureRule::Cost(c) => dist = dist.map(|d| d + c),
                        FeatureRule::Forbid => dist = None,
                    }
                }
            }
            match dist {
                Some(d) => {
                    cost[(i, j)] = d * d;
                    cost[(j, i)] = d * d;
                }
                None => {
                    forbidden[(i, j)] = 1.0;
                    forbidden[(j, i)] = 1.0;
                }
            }
        }
    }
    Ok(CostStructure { cost, forbidden })
}
