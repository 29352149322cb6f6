use std::path::Path;

use crate::data::{Domain, DomainDataset, Task, TimeSeriesSample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Columns around the sensor block: `series_id, step, sensor_1..sensor_M, label, domain`.
pub const CSV_FIXED_COLUMNS: [&str; 4] = ["series_id", "step", "label", "domain"];

fn header(sensors: usize) -> Vec<String> {
    let mut h = vec!["series_id".to_string(), "step".to_string()];
    h.extend((1..=sensors).map(|k| format!("sensor_{k}")));
    h.push("label".into());
    h.push("domain".into());
    h
}

/// One row per time step of every window; the window's label and domain id
/// repeat on each of its rows.
pub fn write_csv(ds: &DomainDataset, path: &Path) -> Result<()> {
    let m = ds.sensors().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    let io_err = |e: csv::Error| Error::parse(path, e);
    w.write_record(header(m)).map_err(io_err)?;
    for (id, s) in ds.samples.iter().enumerate() {
        for (step, row) in s.x.data().chunks(m).enumerate() {
            let mut rec = vec![id.to_string(), step.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            rec.push(s.y.to_string());
            rec.push(s.domain.label().to_string());
            w.write_record(&rec).map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path, task: Task) -> Result<DomainDataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let head: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    for col in CSV_FIXED_COLUMNS {
        if !head.iter().any(|h| h == col) {
            return Err(Error::Schema(col.to_string()));
        }
    }
    let m = head.len() - CSV_FIXED_COLUMNS.len();
    if head != header(m) {
        return Err(Error::parse(path, format!("unexpected column order {head:?}")));
    }
    let num = |field: &str, line: u64| -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|_| Error::parse(path, format!("line {line}: `{field}` is not a number")))
    };
    let mut samples: Vec<TimeSeriesSample> = Vec::new();
    let mut current: Option<(String, Vec<f64>, f64, Domain)> = None;
    let mut domain_seen: Option<Domain> = None;
    let finish = |cur: (String, Vec<f64>, f64, Domain), samples: &mut Vec<TimeSeriesSample>| -> Result<()> {
        let (_, data, y, domain) = cur;
        let rows = data.len() / m;
        samples.push(TimeSeriesSample {
            x: Tensor::new(vec![rows, m], data)?,
            y,
            domain,
            latent: None,
        });
        Ok(())
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0].to_string();
        let step = rec[1]
            .parse::<usize>()
            .map_err(|_| Error::parse(path, format!("line {line}: bad step `{}`", &rec[1])))?;
        let values = (0..m).map(|k| num(&rec[2 + k], line)).collect::<Result<Vec<f64>>>()?;
        let y = num(&rec[2 + m], line)?;
        let d = rec[3 + m]
            .parse::<usize>()
            .map_err(|_| Error::parse(path, format!("line {line}: bad domain `{}`", &rec[3 + m])))
            .and_then(Domain::from_label)?;
        if *domain_seen.get_or_insert(d) != d {
            return Err(Error::Data(format!("line {line}: file mixes domains")));
        }
        match current.as_mut() {
            Some(cur) if cur.0 == id => {
                if step != cur.1.len() / m || cur.2 != y {
                    return Err(Error::Data(format!("line {line}: series `{id}` is not contiguous")));
                }
                cur.1.extend(values);
            }
            _ => {
                if step != 0 {
                    return Err(Error::Data(format!("line {line}: series `{id}` does not start at step 0")));
                }
                if let Some(done) = current.take() {
                    finish(done, &mut samples)?;
                }
                current = Some((id, values, y, d));
            }
        }
    }
    if let Some(done) = current.take() {
        finish(done, &mut samples)?;
    }
    let domain = domain_seen.ok_or_else(|| Error::Data(format!("{} holds no rows", path.display())))?;
    DomainDataset::new(domain, task, samples)
}
