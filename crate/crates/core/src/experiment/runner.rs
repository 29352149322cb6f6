use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{GenerateConfig, Splits};
use super::plan::{DataSource, RunSpec};
use super::write_atomic;
use crate::data::{DomainDataset, Task};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Cmtn, ForwardMode, Variant};
use crate::trainer::{evaluate, train, ExperimentResult};

pub const RESULTS_DIR: &str = "results";
pub const CHECKPOINTS_DIR: &str = "checkpoints";
pub const FAILURES_DIR: &str = "failures";

/// Mean attention weights over a test split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttentionSummary {
    /// Per position `1..N-1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    /// Per feature, averaged over time steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

/// Everything a finished run leaves behind, minus the checkpoint itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub entry: String,
    pub variant: Variant,
    pub task: Task,
    pub data: String,
    pub window: usize,
    pub seed: u64,
    pub result: ExperimentResult,
    pub attention: AttentionSummary,
    /// Relative to the output directory.
    pub checkpoint: String,
}

impl RunRecord {
    /// Target-test MAPE for regression, AUC for classification.
    pub fn primary_metric(&self) -> Option<f64> {
        let m = self.result.metrics.get("target_test")?;
        match self.task {
            Task::Regression => m.mape,
            Task::Classification => m.auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: String,
    pub entry: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub completed: Vec<RunRecord>,
    pub failed: Vec<RunFailure>,
}

pub fn load_data(spec: &RunSpec) -> Result<Splits> {
    let task = spec.config.task;
    match &spec.data {
        DataSource::Suite { kind, samples, sensors } => {
            let cfg = GenerateConfig {
                suite: Some(*kind),
                seed: spec.config.seed,
                sensors: *sensors,
                window: spec.window.unwrap_or(6),
                samples: *samples,
                task,
                burn_in: 50,
                source: None,
                target: None,
                files: Vec::new(),
            };
            Ok(Splits::generate(&cfg)?.1)
        }
        DataSource::Dir(dir) => Splits::read_dir(dir, task),
    }
}

pub fn attention_summary(model: &Cmtn, ds: &DomainDataset, exec: Execution) -> Result<AttentionSummary> {
    let v = model.variant;
    if !(v.has_dynamic_attention() || v.has_temporal_attention()) || ds.is_empty() {
        return Ok(AttentionSummary::default());
    }
    let records = exec
        .map(&ds.samples, |s| model.forward(&s.x, ds.domain, &ForwardMode::eval()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mean = |vs: Vec<&Vec<f64>>| -> Option<Vec<f64>> {
        let n = vs.len() as f64;
        let first = vs.first()?;
        let mut acc = vec![0.0; first.len()];
        for v in &vs {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        Some(acc.into_iter().map(|a| a / n).collect())
    };
    let gamma = mean(records.iter().filter_map(|r| r.gamma.as_ref()).collect());
    let alpha = mean(records.iter().filter_map(|r| r.alpha.as_ref()).flatten().collect());
    Ok(AttentionSummary { gamma, alpha })
}

/// Trains, evaluates and persists one run.
pub fn execute_run(spec: &RunSpec, out: &Path) -> Result<RunRecord> {
    let splits = load_data(spec)?;
    let cfg = &spec.config;
    let target = cfg.variant.is_adversarial().then_some(&splits.target_train);
    let (model, mut result) = train(cfg, &splits.source_train, target)?;
    let exec = cfg.execution;
    if !splits.source_test.is_empty() {
        result.metrics.insert("source_test".into(), evaluate(&model, &splits.source_test, exec)?);
    }
    result.metrics.insert("target_test".into(), evaluate(&model, &splits.target_test, exec)?);
    let attention = attention_summary(&model, &splits.target_test, exec)?;

    let checkpoint = PathBuf::from(CHECKPOINTS_DIR).join(format!("{}.json", spec.run_id));
    let config = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let ckpt_path = out.join(&checkpoint);
    let tmp = ckpt_path.with_extension("json.tmp");
    model.save(&tmp, Some(config))?;
    std::fs::rename(&tmp, &ckpt_path).map_err(|e| Error::io(&ckpt_path, e))?;

    let record = RunRecord {
        run_id: spec.run_id.clone(),
        entry: spec.entry.clone(),
        variant: cfg.variant,
        task: cfg.task,
        data: spec.data.label(),
        window: splits.target_test.window().or(splits.source_train.window()).unwrap_or(0),
        seed: cfg.seed,
        result,
        attention,
        checkpoint: checkpoint.to_string_lossy().into_owned(),
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&out.join(RESULTS_DIR).join(format!("{}.json", spec.run_id)), json.as_bytes())?;
    Ok(record)
}

/// Runs every spec in order. A failed run is recorded and does not stop
/// the others.
pub fn run_all(specs: &[RunSpec], out: &Path, mut on_run: impl FnMut(&RunSpec, &Result<RunRecord>)) -> Result<RunSummary> {
    for d in [RESULTS_DIR, CHECKPOINTS_DIR, FAILURES_DIR] {
        let p = out.join(d);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut summary = RunSummary::default();
    for spec in specs {
        let outcome = execute_run(spec, out);
        on_run(spec, &outcome);
        let failure_path = out.join(FAILURES_DIR).join(format!("{}.json", spec.run_id));
        match outcome {
            Ok(record) => {
                if failure_path.exists() {
                    std::fs::remove_file(&failure_path).map_err(|e| Error::io(&failure_path, e))?;
                }
                summary.completed.push(record);
            }
            Err(e) => {
                let failure = RunFailure {
                    run_id: spec.run_id.clone(),
                    entry: spec.entry.clone(),
                    error: e.to_string(),
                };
                let json = serde_json::to_string_pretty(&failure).map_err(|e| Error::Config(e.to_string()))?;
                write_atomic(&failure_path, json.as_bytes())?;
                summary.failed.push(failure);
            }
        }
    }
    Ok(summary)
}

/// Reads every result record under `dir/results`, sorted by run id.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let results = dir.join(RESULTS_DIR);
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&results) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&results, e)),
    };
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::parse(p, e))
        })
        .collect()
}

