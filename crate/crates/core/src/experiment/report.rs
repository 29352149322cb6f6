use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::runner::RunRecord;
use super::write_atomic;
use crate::data::Task;
use crate::error::{Error, Result};
use crate::metrics::median;

/// One (variant, data, task, window) group of runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub variant: String,
    pub data: String,
    pub task: Task,
    pub window: usize,
    pub runs: usize,
    /// `MAPE` or `AUC` on the target test split.
    pub metric: &'static str,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub accuracy: Option<f64>,
    pub gamma: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
}

/// Median metric at one window of a sequence-length sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeqPoint {
    pub variant: String,
    pub data: String,
    pub task: Task,
    pub window: usize,
    pub metric: &'static str,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub seqlen: Vec<SeqPoint>,
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "MAPE",
        Task::Classification => "AUC",
    }
}

fn mean_vectors(vs: &[&Vec<f64>]) -> Option<Vec<f64>> {
    let first = vs.first()?;
    if vs.iter().any(|v| v.len() != first.len()) {
        return None;
    }
    let n = vs.len() as f64;
    Some((0..first.len()).map(|i| vs.iter().map(|v| v[i]).sum::<f64>() / n).collect())
}

impl Report {
    /// Groups records; rows sort by variant name, then data label, task
    /// and window.
    pub fn build(records: &[RunRecord]) -> Result<Report> {
        if records.is_empty() {
            return Err(Error::Usage("no result records to report".into()));
        }
        let mut groups: BTreeMap<(String, String, &'static str, usize), Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            let task_key = match r.task {
                Task::Regression => "regression",
                Task::Classification => "classification",
            };
            groups
                .entry((r.variant.name().to_string(), r.data.clone(), task_key, r.window))
                .or_default()
                .push(r);
        }
        let rows: Vec<ReportRow> = groups
            .into_iter()
            .map(|((variant, data, _, window), rs)| {
                let task = rs[0].task;
                let values: Vec<f64> = rs.iter().filter_map(|r| r.primary_metric()).collect();
                let acc: Vec<f64> = rs
                    .iter()
                    .filter_map(|r| r.result.metrics.get("target_test").and_then(|m| m.accuracy))
                    .collect();
                let gammas: Vec<&Vec<f64>> = rs.iter().filter_map(|r| r.attention.gamma.as_ref()).collect();
                let alphas: Vec<&Vec<f64>> = rs.iter().filter_map(|r| r.attention.alpha.as_ref()).collect();
                let fold = |f: fn(f64, f64) -> f64| values.iter().copied().reduce(f);
                ReportRow {
                    variant,
                    data,
                    task,
                    window,
                    runs: rs.len(),
                    metric: metric_name(task),
                    median: median(&values),
                    mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                    min: fold(f64::min),
                    max: fold(f64::max),
                    accuracy: median(&acc),
                    gamma: mean_vectors(&gammas),
                    alpha: mean_vectors(&alphas),
                }
            })
            .collect();
        let mut windows: BTreeMap<(&str, &str, &str), usize> = BTreeMap::new();
        for r in &rows {
            *windows.entry((&r.variant, &r.data, r.metric)).or_default() += 1;
        }
        let seqlen = rows
            .iter()
            .filter(|r| windows[&(r.variant.as_str(), r.data.as_str(), r.metric)] > 1)
            .map(|r| SeqPoint {
                variant: r.variant.clone(),
                data: r.data.clone(),
                task: r.task,
                window: r.window,
                metric: r.metric,
                median: r.median,
            })
            .collect();
        Ok(Report { rows, seqlen })
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = format!(
            "{:<12} {:<14} {:<15} {:>3} {:>4} {:<6} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
            "variant", "data", "task", "N", "runs", "metric", "median", "mean", "min", "max", "acc"
        );
        for r in &self.rows {
            let task = match r.task {
                Task::Regression => "regression",
                Task::Classification => "classification",
            };
            let _ = writeln!(
                s,
                "{:<12} {:<14} {:<15} {:>3} {:>4} {:<6} {:>10} {:>10} {:>10} {:>10} {:>8}",
                r.variant,
                r.data,
                task,
                r.window,
                r.runs,
                r.metric,
                fmt(r.median),
                fmt(r.mean),
                fmt(r.min),
                fmt(r.max),
                fmt(r.accuracy)
            );
        }
        let attn: Vec<&ReportRow> = self.rows.iter().filter(|r| r.gamma.is_some() || r.alpha.is_some()).collect();
        if !attn.is_empty() {
            s.push_str("\nmean attention on target test\n");
            let join = |v: &Option<Vec<f64>>| {
                v.as_ref().map_or_else(|| "-".to_string(), |v| {
                    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
                })
            };
            for r in attn {
                let _ = writeln!(s, "{} {} N={}", r.variant, r.data, r.window);
                let _ = writeln!(s, "  gamma by position: {}", join(&r.gamma));
                let _ = writeln!(s, "  alpha by feature:  {}", join(&r.alpha));
            }
        }
        s
    }

    fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(&r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn table_csv(&self) -> Result<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        Report::csv_string(
            &["variant", "data", "task", "window", "runs", "metric", "median", "mean", "min", "max", "accuracy"],
            self.rows.iter().map(|r| {
                vec![
                    r.variant.clone(),
                    r.data.clone(),
                    format!("{:?}", r.task).to_lowercase(),
                    r.window.to_string(),
                    r.runs.to_string(),
                    r.metric.to_string(),
                    opt(r.median),
                    opt(r.mean),
                    opt(r.min),
                    opt(r.max),
                    opt(r.accuracy),
                ]
            }),
        )
    }

    pub fn seqlen_csv(&self) -> Result<String> {
        Report::csv_string(
            &["variant", "data", "window", "metric", "median"],
            self.seqlen.iter().map(|p| {
                vec![
                    p.variant.clone(),
                    p.data.clone(),
                    p.window.to_string(),
                    p.metric.to_string(),
                    p.median.map_or_else(String::new, |v| v.to_string()),
                ]
            }),
        )
    }

    pub fn attention_csv(&self) -> Result<String> {
        let mut lines = Vec::new();
        for r in &self.rows {
            for (kind, v) in [("gamma", &r.gamma), ("alpha", &r.alpha)] {
                for (i, x) in v.iter().flatten().enumerate() {
                    lines.push(vec![
                        r.variant.clone(),
                        r.data.clone(),
                        r.window.to_string(),
                        kind.to_string(),
                        (i + 1).to_string(),
                        x.to_string(),
                    ]);
                }
            }
        }
        Report::csv_string(&["variant", "data", "window", "weight", "index", "mean"], lines.into_iter())
    }

    /// Writes `report.txt`, `report.csv`, `seqlen.csv` and `attention.csv`.
    pub fn write(&self, out: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let files = [
            ("report.txt", self.to_text()),
            ("report.csv", self.table_csv()?),
            ("seqlen.csv", self.seqlen_csv()?),
            ("attention.csv", self.attention_csv()?),
        ];
        files
            .into_iter()
            .map(|(name, body)| {
                let p = out.join(name);
                write_atomic(&p, body.as_bytes())?;
                Ok(p)
            })
            .collect()
    }
}
