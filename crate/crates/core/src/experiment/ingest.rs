use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TRAIN_FRACTION;
use crate::data::{Domain, DomainDataset, Task, TimeSeriesSample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Column roles of an external CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    /// Sensor columns in model input order.
    pub sensors: Vec<String>,
    pub label: String,
    /// Sensor columns replaced by their first difference.
    #[serde(default)]
    pub delta: Vec<String>,
    /// Optional column that must increase strictly.
    #[serde(default)]
    pub timestamp: Option<String>,
    pub domain: Domain,
    pub task: Task,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    6
}

impl IngestSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: IngestSchema = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        if schema.window < 2 {
            return Err(Error::Config(format!("window {} must be at least 2", schema.window)));
        }
        if let Some(d) = schema.delta.iter().find(|d| !schema.sensors.contains(d)) {
            return Err(Error::Config(format!("delta column `{d}` is not a sensor column")));
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        IngestSchema::from_toml_str(&text)
    }
}

/// Replaces each value with its difference to the previous row; the
/// result is one shorter.
pub fn delta_transform(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Number of stride-1 windows of length `n` over `rows` rows.
pub fn window_count(rows: usize, n: usize) -> usize {
    (rows + 1).saturating_sub(n)
}

/// Reads, transforms and windows a CSV file. Returns `(train, test)`
/// where the split is at `floor(0.8 * windows)` in time order.
pub fn ingest_csv(path: &Path, schema: &IngestSchema) -> Result<(DomainDataset, DomainDataset)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let head: Vec<String> = r.headers().map_err(|e| Error::parse(path, e))?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        head.iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    };
    let sensor_idx = schema.sensors.iter().map(|s| find(s)).collect::<Result<Vec<_>>>()?;
    let label_idx = find(&schema.label)?;
    let time_idx = schema.timestamp.as_deref().map(find).transpose()?;

    let m = sensor_idx.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut labels = Vec::new();
    let mut last_time: Option<f64> = None;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, format!("line {line}: `{}` in column `{}` is not a number", &rec[i], head[i])))
        };
        if let Some(t) = time_idx {
            let now = num(t)?;
            if last_time.is_some_and(|prev| now <= prev) {
                return Err(Error::Data(format!("line {line}: timestamps are not strictly increasing")));
            }
            last_time = Some(now);
        }
        for (col, &i) in columns.iter_mut().zip(&sensor_idx) {
            col.push(num(i)?);
        }
        labels.push(num(label_idx)?);
    }

    let mut skip = 0;
    if !schema.delta.is_empty() {
        for (col, name) in columns.iter_mut().zip(&schema.sensors) {
            if schema.delta.contains(name) {
                *col = delta_transform(col);
            } else if !col.is_empty() {
                col.remove(0);
            }
        }
        skip = 1;
    }
    let labels = &labels[skip.min(labels.len())..];
    let rows = labels.len();
    let n = schema.window;
    let samples = (0..window_count(rows, n))
        .map(|start| {
            let end = start + n - 1;
            let mut data = Vec::with_capacity(n * m);
            for t in start..=end {
                data.extend(columns.iter().map(|c| c[t]));
            }
            let y = labels[end];
            if schema.task == Task::Classification && y != 0.0 && y != 1.0 {
                return Err(Error::Data(format!("row {}: classification label {y} is not 0 or 1", end + skip + 1)));
            }
            Ok(TimeSeriesSample {
                x: Tensor::new(vec![n, m], data)?,
                y,
                domain: schema.domain,
                latent: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{} yields no {n}-step windows", path.display())));
    }
    let ds = DomainDataset::new(schema.domain, schema.task, samples)?;
    Ok(ds.split_at_fraction(TRAIN_FRACTION))
}
