//! Audit data, model predictions and run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::inference::BootstrapConfig;
use crate::sample_space::{bucket_label, FiniteSampleSpace, Schema, SimilaritySpec};

pub const DEFAULT_DELTA: f64 = 0.0365;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const HTTP_BATCH_CAP: usize = 1024;
pub const HTTP_RETRIES: usize = 3;

pub const LABEL_COLUMN: &str = "label";
pub const PREDICTION_COLUMN: &str = "prediction";
pub const LOSS_COLUMN: &str = "loss";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Misclassification indicator of the audited model.
    #[default]
    ZeroOne,
    /// Per-row losses from a `loss` column of the audit data.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    PredictionsFile {
        path: String,
    },
    HttpEndpoint {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        /// First retry delay; doubles on each further retry.
        #[serde(default = "default_backoff")]
        backoff_ms: u64,
    },
}

fn default_timeout() -> u64 {
    30
}

fn default_backoff() -> u64 {
    200
}

/// Which feature values form the privileged group, and which label is the
/// positive outcome for group metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivilegedGroup {
    pub feature: String,
    pub values: Vec<String>,
    pub positive_label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub schema: Schema,
    pub similarity: SimilaritySpec,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSource>,
    #[serde(default)]
    pub complete_space: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privileged: Option<PrivilegedGroup>,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(inner) => Error::Config(format!("{}: {inner}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::Config(format!(
                "epsilon = {} must be finite and ≥ 0",
                self.epsilon
            )));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::Config(format!("delta = {} must be finite and ≥ 0", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.bootstrap.replicates == 0 {
            return Err(Error::Config("bootstrap.replicates must be positive".into()));
        }
        if let Some(group) = &self.privileged {
            let idx = self
                .schema
                .feature_index(&group.feature)
                .ok_or_else(|| Error::Config(format!("privileged feature `{}` is not in the schema", group.feature)))?;
            let domain = self.schema.features[idx].domain();
            if let Some(v) = group.values.iter().find(|v| !domain.contains(v)) {
                return Err(Error::Config(format!(
                    "privileged value `{v}` is not in the domain of `{}`",
                    group.feature
                )));
            }
            if self.schema.label_index(&group.positive_label).is_none() {
                return Err(Error::Config(format!(
                    "positive label `{}` is not a label",
                    group.positive_label
                )));
            }
        }
        Ok(())
    }
}

/// One audit row. `features` hold domain values (bucket labels for bucketed
/// features); `raw` keeps the values as read, for model queries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRecord {
    /// Line number in the source file (header is line 1).
    pub row: usize,
    pub features: Vec<String>,
    pub raw: Vec<String>,
    pub label: String,
    pub prediction: Option<String>,
    pub loss: Option<f64>,
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        message: message.into(),
    }
}

/// Maps a raw cell to its domain value: categorical values must be in the
/// domain; bucketed values are numbers or already a bucket label.
fn to_domain(schema: &Schema, feature: usize, raw: &str) -> std::result::Result<String, String> {
    let def = &schema.features[feature];
    let raw = raw.trim();
    match &def.edges {
        Some(edges) => {
            if def.domain().iter().any(|b| b == raw) {
                return Ok(raw.to_string());
            }
            let x: f64 = raw
                .parse()
                .map_err(|_| format!("`{raw}` is not a number for bucketed feature `{}`", def.name))?;
            if !x.is_finite() {
                return Err(format!("non-finite value for `{}`", def.name));
            }
            Ok(bucket_label(edges, x))
        }
        None => {
            if def.domain().iter().any(|v| v == raw) {
                Ok(raw.to_string())
            } else {
                Err(format!("`{raw}` is not in the domain of `{}`", def.name))
            }
        }
    }
}

struct Columns {
    features: Vec<usize>,
    label: Option<usize>,
    prediction: Option<usize>,
    loss: Option<usize>,
}

fn locate_columns(path: &Path, headers: &csv::StringRecord, schema: &Schema, allowed: &[&str]) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    for h in headers.iter() {
        let h = h.trim();
        if schema.feature_index(h).is_none() && !allowed.contains(&h) {
            return Err(parse_err(path, 1, format!("unexpected column `{h}`")));
        }
    }
    let features = schema
        .features
        .iter()
        .map(|f| find(&f.name).ok_or_else(|| parse_err(path, 1, format!("missing column `{}`", f.name))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Columns {
        features,
        label: find(LABEL_COLUMN),
        prediction: find(PREDICTION_COLUMN),
        loss: find(LOSS_COLUMN),
    })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(path, 0, format!("{other:?}")),
        })
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn read_cells(
    path: &Path,
    record: &csv::StringRecord,
    cols: &Columns,
    schema: &Schema,
) -> Result<(Vec<String>, Vec<String>)> {
    let row = line_of(record);
    let raw: Vec<String> = cols.features.iter().map(|&c| record[c].trim().to_string()).collect();
    let features = raw
        .iter()
        .enumerate()
        .map(|(i, v)| to_domain(schema, i, v).map_err(|m| parse_err(path, row, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok((raw, features))
}

fn check_label(path: &Path, row: usize, schema: &Schema, value: &str, what: &str) -> Result<String> {
    let value = value.trim();
    if schema.label_index(value).is_none() {
        return Err(parse_err(
            path,
            row,
            format!("{what} `{value}` is not in the label set"),
        ));
    }
    Ok(value.to_string())
}

/// Reads an audit CSV: schema feature columns, `label`, and optionally
/// `prediction` and `loss`.
pub fn load_audit_csv(path: &Path, schema: &Schema) -> Result<Vec<PredictionRecord>> {
    schema.validate()?;
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let cols = locate_columns(path, &headers, schema, &[LABEL_COLUMN, PREDICTION_COLUMN, LOSS_COLUMN])?;
    let label_col = cols
        .label
        .ok_or_else(|| parse_err(path, 1, format!("missing column `{LABEL_COLUMN}`")))?;

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, row, e.to_string())
        })?;
        let row = line_of(&record);
        let (raw, features) = read_cells(path, &record, &cols, schema)?;
        let label = check_label(path, row, schema, &record[label_col], "label")?;
        let prediction = match cols.prediction.map(|c| record[c].trim()) {
            None | Some("") => None,
            Some(p) => Some(check_label(path, row, schema, p, "prediction")?),
        };
        let loss = match cols.loss.map(|c| record[c].trim()) {
            None | Some("") => None,
            Some(v) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| parse_err(path, row, format!("loss `{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(parse_err(path, row, "loss must be finite"));
                }
                Some(x)
            }
        };
        out.push(PredictionRecord {
            row,
            features,
            raw,
            label,
            prediction,
            loss,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(out)
}

/// Writes records in audit-CSV layout, feature columns holding domain values.
pub fn write_audit_csv<W: std::io::Write>(records: &[PredictionRecord], schema: &Schema, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_prediction = records.iter().any(|r| r.prediction.is_some());
    let with_loss = records.iter().any(|r| r.loss.is_some());
    let mut header: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    header.push(LABEL_COLUMN);
    if with_prediction {
        header.push(PREDICTION_COLUMN);
    }
    if with_loss {
        header.push(LOSS_COLUMN);
    }
    w.write_record(&header)?;
    for r in records {
        let mut line: Vec<String> = r.features.clone();
        line.push(r.label.clone());
        if with_prediction {
            line.push(r.prediction.clone().unwrap_or_default());
        }
        if with_loss {
            line.push(r.loss.map(|x| x.to_string()).unwrap_or_default());
        }
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

/// Model predictions per feature cell, read from a predictions CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellPredictions {
    map: BTreeMap<Vec<String>, String>,
}

impl CellPredictions {
    pub fn load(path: &Path, schema: &Schema) -> Result<Self> {
        let mut rdr = reader(path)?;
        let headers = rdr.headers()?.clone();
        let cols = locate_columns(path, &headers, schema, &[PREDICTION_COLUMN])?;
        let pred_col = cols
            .prediction
            .ok_or_else(|| parse_err(path, 1, format!("missing column `{PREDICTION_COLUMN}`")))?;
        let mut map: BTreeMap<Vec<String>, (String, usize)> = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let row = line_of(&record);
            let (_, features) = read_cells(path, &record, &cols, schema)?;
            let prediction = check_label(path, row, schema, &record[pred_col], "prediction")?;
            match map.get(&features) {
                Some((existing, first)) if *existing != prediction => {
                    return Err(parse_err(
                        path,
                        row,
                        format!(
                            "conflicting prediction for ({}): `{prediction}` here, `{existing}` at row {first}",
                            features.join(", ")
                        ),
                    ));
                }
                Some(_) => {}
                None => {
                    map.insert(features, (prediction, row));
                }
            }
        }
        if map.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Self {
            map: map.into_iter().map(|(k, (v, _))| (k, v)).collect(),
        })
    }

    pub fn from_pairs<I: IntoIterator<Item = (Vec<String>, String)>>(pairs: I) -> Self {
        Self {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, features: &[String]) -> Option<&str> {
        self.map.get(features).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Attaches predictions to every record by joining on the feature cell.
pub fn join_predictions(records: &[PredictionRecord], table: &CellPredictions) -> Result<Vec<PredictionRecord>> {
    records
        .iter()
        .map(|r| {
            let prediction = table.get(&r.features).ok_or_else(|| Error::JoinMiss {
                row: r.row,
                tuple: r.features.join(", "),
            })?;
            Ok(PredictionRecord {
                prediction: Some(prediction.to_string()),
                ..r.clone()
            })
        })
        .collect()
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    instances: &'a [Vec<Value>],
}

#[derive(Deserialize)]
struct HttpResponse {
    predictions: Vec<Value>,
}

fn json_cell(raw: &str) -> Value {
    match raw.parse::<f64>() {
        Ok(x) if x.is_finite() => {
            serde_json::Number::from_f64(x).map_or_else(|| Value::String(raw.into()), Value::Number)
        }
        _ => Value::String(raw.to_string()),
    }
}

fn response_label(value: &Value, schema: &Schema) -> Result<String> {
    let text = match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.to_string(),
            None => n.to_string(),
        },
        Value::Bool(b) => b.to_string(),
        other => return Err(Error::Protocol(format!("prediction `{other}` is not a label"))),
    };
    if schema.label_index(&text).is_none() {
        return Err(Error::Protocol(format!("prediction `{text}` is not in the label set")));
    }
    Ok(text)
}

/// Queries a model endpoint in batches of at most [`HTTP_BATCH_CAP`] rows,
/// sending raw feature values in schema order.
pub fn query_http(
    records: &[PredictionRecord],
    schema: &Schema,
    url: &str,
    timeout: Duration,
    backoff: Duration,
) -> Result<Vec<PredictionRecord>> {
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| Error::Http(e.to_string()))?;
    let mut out = Vec::with_capacity(records.len());
    for batch in records.chunks(HTTP_BATCH_CAP) {
        let instances: Vec<Vec<Value>> = batch
            .iter()
            .map(|r| r.raw.iter().map(|v| json_cell(v)).collect())
            .collect();
        let body = serde_json::to_vec(&HttpRequest { instances: &instances })?;
        let response = post_with_retries(&client, url, body, backoff)?;
        let parsed: HttpResponse =
            serde_json::from_slice(&response).map_err(|e| Error::Protocol(format!("malformed response: {e}")))?;
        if parsed.predictions.len() != batch.len() {
            return Err(Error::Protocol(format!(
                "sent {} instances, received {} predictions",
                batch.len(),
                parsed.predictions.len()
            )));
        }
        for (r, p) in batch.iter().zip(&parsed.predictions) {
            out.push(PredictionRecord {
                prediction: Some(response_label(p, schema)?),
                ..r.clone()
            });
        }
    }
    Ok(out)
}

fn post_with_retries(
    client: &reqwest::blocking::Client,
    url: &str,
    body: Vec<u8>,
    backoff: Duration,
) -> Result<Vec<u8>> {
    let mut last = String::new();
    for attempt in 0..=HTTP_RETRIES {
        if attempt > 0 {
            std::thread::sleep(backoff * (1 << (attempt - 1)));
        }
        let sent = client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.clone())
            .send();
        match sent {
            Ok(resp) if resp.status().is_success() => {
                return resp.bytes().map(|b| b.to_vec()).map_err(|e| Error::Http(e.to_string()));
            }
            Ok(resp) => last = format!("status {}", resp.status()),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Http(format!(
        "{url}: giving up after {} attempts: {last}",
        HTTP_RETRIES + 1
    )))
}

/// Fills in predictions from the configured source, preserving record order.
pub fn fetch_predictions(
    records: &[PredictionRecord],
    schema: &Schema,
    source: &ModelSource,
) -> Result<Vec<PredictionRecord>> {
    match source {
        ModelSource::PredictionsFile { path } => {
            join_predictions(records, &CellPredictions::load(Path::new(path), schema)?)
        }
        ModelSource::HttpEndpoint {
            url,
            timeout_secs,
            backoff_ms,
        } => query_http(
            records,
            schema,
            url,
            Duration::from_secs(*timeout_secs),
            Duration::from_millis(*backoff_ms),
        ),
    }
}

pub fn zero_one_loss(record: &PredictionRecord) -> Result<f64> {
    let prediction = record
        .prediction
        .as_ref()
        .ok_or(Error::MissingPrediction { row: record.row })?;
    Ok(if *prediction == record.label { 0.0 } else { 1.0 })
}

fn record_loss(record: &PredictionRecord, kind: LossKind) -> Result<f64> {
    match kind {
        LossKind::ZeroOne => zero_one_loss(record),
        LossKind::Custom => record.loss.ok_or_else(|| Error::Parse {
            path: "audit data".into(),
            row: record.row,
            message: "custom loss selected but the row has no `loss` value".into(),
        }),
    }
}

/// Mean loss over the records.
pub fn mean_loss(records: &[PredictionRecord], kind: LossKind) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyData);
    }
    let total = records.iter().map(|r| record_loss(r, kind)).sum::<Result<f64>>()?;
    Ok(total / records.len() as f64)
}

/// Loss per sample point: the mean loss of the records in the cell. Cells
/// without records take the model's prediction from `fallback`.
pub fn cell_losses(
    space: &FiniteSampleSpace,
    records: &[PredictionRecord],
    kind: LossKind,
    fallback: Option<&CellPredictions>,
) -> Result<Vec<f64>> {
    let schema = space.schema();
    let mut sum = vec![0.0; space.len()];
    let mut count = vec![0u64; space.len()];
    for r in records {
        let (cell, label) = schema.encode(&r.features, &r.label)?;
        let k = space
            .find(&cell, label)
            .ok_or_else(|| Error::InvalidInput(format!("row {} is outside the sample space", r.row)))?;
        sum[k] += record_loss(r, kind)?;
        count[k] += 1;
    }
    (0..space.len())
        .map(|k| {
            if count[k] > 0 {
                return Ok(sum[k] / count[k] as f64);
            }
            let (features, label) = space.describe(k);
            let prediction = match (kind, fallback) {
                (LossKind::ZeroOne, Some(table)) => table.get(&features),
                _ => None,
            };
            match prediction {
                Some(p) => Ok(if p == label { 0.0 } else { 1.0 }),
                None => Err(Error::InvalidInput(format!(
                    "no loss for unobserved cell ({}) with label {label}; supply a predictions file covering it",
                    features.join(", ")
                ))),
            }
        })
        .collect()
}
