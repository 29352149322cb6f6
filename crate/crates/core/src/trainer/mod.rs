//! Training configuration, class balancing, batching, Adam, and the loop
//! that ties them to the model objective.

mod adam;
mod batch;

pub use adam::{adam_step, clip_global_norm, AdamConfig, OptimizerState};
pub use batch::{downsample_normals, Batch, Batcher};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Domain, DomainDataset, Task};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::MetricReport;
use crate::model::{Cmtn, LossOptions, ModelDims, Partition, Prediction, Scaler, Variant};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub variant: Variant,
    pub task: Task,
    /// Small widths for single-machine runs; `false` selects the full-size profile.
    pub desk_scale: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Gradient reversal coefficient.
    pub lambda: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: usize,
    pub features: usize,
    pub attention: usize,
    pub mlp_hidden: usize,
    /// Global-norm clip applied per parameter group; `0` disables.
    pub clip_norm: f64,
    /// Down-sample normal source samples to a 1:1 class ratio (classification only).
    pub balance_classes: bool,
    /// For variants with domain-specific extractors: standardize target
    /// inputs with target statistics, and reset `θ_T` to `θ_S` rescaled to
    /// the target's pre-activation moments before every epoch and after the
    /// last one.
    pub domain_normalization: bool,
    pub execution: Execution,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig::desk(Variant::Cmtn, Task::Regression)
    }
}

impl TrainingConfig {
    /// Desk-scale profile shared by every variant.
    pub fn desk(variant: Variant, task: Task) -> Self {
        TrainingConfig {
            variant,
            task,
            desk_scale: true,
            batch_size: 64,
            learning_rate: 0.003,
            lambda: 0.05,
            dropout_rate: 0.1,
            epochs: 30,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: 32,
            features: 16,
            attention: 16,
            mlp_hidden: 32,
            clip_norm: 5.0,
            balance_classes: true,
            domain_normalization: true,
            execution: Execution::default(),
        }
    }

    /// Full-size profile with the per-method learning rate, coefficient and
    /// dropout of the published chiller settings.
    pub fn paper_scale(variant: Variant, task: Task) -> Self {
        let (learning_rate, lambda, dropout_rate) = match variant {
            Variant::LstmS2t => (0.0001, 0.0, 0.5),
            Variant::BaseDann => (0.003, 0.0001, 0.1),
            _ => (0.003, 0.005, 0.1),
        };
        TrainingConfig {
            desk_scale: false,
            batch_size: 512,
            learning_rate,
            lambda,
            dropout_rate,
            epochs: 50,
            hidden: 500,
            features: 100,
            attention: 100,
            mlp_hidden: 100,
            ..TrainingConfig::desk(variant, task)
        }
    }

    pub fn dims(&self, sensors: usize) -> ModelDims {
        ModelDims {
            sensors,
            features: self.features,
            hidden: self.hidden,
            attention: self.attention,
            mlp_hidden: self.mlp_hidden,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 || (self.variant.is_adversarial() && self.batch_size < 2) {
            return bad(format!("batch_size {} too small for {}", self.batch_size, self.variant));
        }
        crate::layers::Dropout::validate(self.dropout_rate)?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad(format!("adam betas {} {} outside [0, 1)", self.beta1, self.beta2));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad(format!("eps {} must be positive", self.eps));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return bad(format!("clip_norm {} must be non-negative", self.clip_norm));
        }
        self.dims(1).validate()
    }

    /// Parses a flat TOML document. `variant`, `task` and `desk_scale` pick
    /// the base profile; every other key overrides it. Unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        TrainingConfig::from_table(table)
    }

    /// [`TrainingConfig::from_toml_str`] on an already parsed table.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let pick = |key: &str| table.get(key).cloned();
        let variant: Variant = match pick("variant") {
            Some(v) => v.try_into().map_err(|e| Error::Config(format!("variant: {e}")))?,
            None => Variant::Cmtn,
        };
        let task: Task = match pick("task") {
            Some(v) => v.try_into().map_err(|e| Error::Config(format!("task: {e}")))?,
            None => Task::Regression,
        };
        let desk = match pick("desk_scale") {
            Some(toml::Value::Boolean(b)) => b,
            Some(other) => return Err(Error::Config(format!("desk_scale must be a boolean, got {other}"))),
            None => true,
        };
        let base = if desk {
            TrainingConfig::desk(variant, task)
        } else {
            TrainingConfig::paper_scale(variant, task)
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(format!("{e}")))?;
        for (k, v) in table {
            if !merged.contains_key(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            merged.insert(k, v);
        }
        let cfg: TrainingConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainingConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch means of the label, domain and combined losses.
    pub label_loss: f64,
    pub domain_loss: f64,
    pub total_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub history: Vec<EpochRecord>,
    /// Keyed by split name.
    pub metrics: BTreeMap<String, MetricReport>,
    pub wall_clock_secs: f64,
    pub seed: u64,
    pub config: TrainingConfig,
}

/// Trains a fresh model. `target` is the unlabelled target training set and
/// may be `None` only for the source-only variant.
pub fn train(
    cfg: &TrainingConfig,
    source: &DomainDataset,
    target: Option<&DomainDataset>,
) -> Result<(Cmtn, ExperimentResult)> {
    train_with(cfg, source, target, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    cfg: &TrainingConfig,
    source: &DomainDataset,
    target: Option<&DomainDataset>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Cmtn, ExperimentResult)> {
    let started = Instant::now();
    cfg.validate()?;
    check_dataset(source, Domain::Source, cfg.task)?;
    let target = if cfg.variant.is_adversarial() {
        let t = target.ok_or_else(|| Error::Usage(format!("{} needs target samples", cfg.variant)))?;
        check_dataset(t, Domain::Target, cfg.task)?;
        if t.sensors() != source.sensors() || t.window() != source.window() {
            return Err(Error::Data("source and target windows differ in shape".into()));
        }
        Some(t)
    } else {
        None
    };
    let sensors = source.sensors().expect("nonempty source");

    let balanced;
    let train_src = if cfg.task == Task::Classification && cfg.balance_classes {
        balanced = downsample_normals(source, rng::derive_seed(cfg.seed, "balance", &[]))?;
        &balanced
    } else {
        source
    };

    let mut model = Cmtn::new(cfg.variant, cfg.task, cfg.dims(sensors), rng::derive_seed(cfg.seed, "init", &[]))?;
    model.scaler = Scaler::fit(source)?;
    let anchor = match target {
        Some(t) if cfg.domain_normalization && cfg.variant.has_domain_extractors() => Some((
            source.samples.iter().map(|s| &s.x).collect::<Vec<&Tensor>>(),
            t.samples.iter().map(|s| &s.x).collect::<Vec<&Tensor>>(),
        )),
        _ => None,
    };
    if let Some(t) = target.filter(|_| anchor.is_some()) {
        model.scaler.fit_target(t)?;
    }
    let mut batcher = Batcher::new(train_src, target, cfg.batch_size, rng::derive_seed(cfg.seed, "batches", &[]))?;
    let mut state = OptimizerState::new(&model.params.tensors());
    let adam = cfg.adam();
    let partitions = model.params.partitions();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if let Some((xs, xt)) = &anchor {
            model.match_target_moments(xs, xt)?;
        }
        let batches = batcher.epoch(epoch as u64);
        let (mut label, mut domain) = (0.0, 0.0);
        for (b, batch) in batches.iter().enumerate() {
            let opts = LossOptions {
                lambda: cfg.lambda,
                dropout_rate: cfg.dropout_rate,
                seed: rng::derive_seed(cfg.seed, "dropout", &[epoch as u64, b as u64]),
                training: true,
                execution: cfg.execution,
            };
            let report = model.total_loss(&batch.labelled, &batch.mixed, &opts)?;
            let finite = report.total.is_finite() && report.grads.iter().all(Tensor::is_finite);
            if !finite {
                return Err(Error::NonFinite { epoch, batch: b });
            }
            label += report.label;
            domain += report.domain;
            let mut grads = report.grads;
            if cfg.clip_norm > 0.0 {
                let (mut shared, mut head): (Vec<&mut Tensor>, Vec<&mut Tensor>) = (Vec::new(), Vec::new());
                for (g, p) in grads.iter_mut().zip(&partitions) {
                    if *p == Partition::PhiD {
                        head.push(g);
                    } else {
                        shared.push(g);
                    }
                }
                clip_global_norm(&mut shared, cfg.clip_norm);
                clip_global_norm(&mut head, cfg.clip_norm);
            }
            adam_step(&mut model.params.tensors_mut(), &grads, &mut state, &adam)?;
        }
        let n = batches.len().max(1) as f64;
        let record = EpochRecord {
            epoch,
            label_loss: label / n,
            domain_loss: domain / n,
            total_loss: (label + domain) / n,
        };
        on_epoch(&record);
        history.push(record);
    }

    if let Some((xs, xt)) = &anchor {
        model.match_target_moments(xs, xt)?;
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("source_train".to_string(), evaluate(&model, source, cfg.execution)?);
    let result = ExperimentResult {
        history,
        metrics,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    Ok((model, result))
}

fn check_dataset(ds: &DomainDataset, domain: Domain, task: Task) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Data(format!("empty {domain:?} dataset")));
    }
    if ds.domain != domain {
        return Err(Error::Usage(format!("expected a {domain:?} dataset, got {:?}", ds.domain)));
    }
    if ds.task != task {
        return Err(Error::Config(format!("dataset task {:?} does not match config {task:?}", ds.task)));
    }
    Ok(())
}

/// Evaluation-mode predictions routed through the dataset's own domain.
pub fn predictions(model: &Cmtn, ds: &DomainDataset, exec: Execution) -> Result<Vec<Prediction>> {
    exec.map(&ds.samples, |s| model.predict(&s.x, ds.domain)).into_iter().collect()
}

pub fn evaluate(model: &Cmtn, ds: &DomainDataset, exec: Execution) -> Result<MetricReport> {
    let preds = predictions(model, ds, exec)?;
    match model.task {
        Task::Regression => {
            let y: Vec<f64> = ds.samples.iter().map(|s| s.y).collect();
            let y_hat: Vec<f64> = preds.iter().map(Prediction::score).collect();
            MetricReport::regression(&y, &y_hat)
        }
        Task::Classification => {
            let truth: Vec<usize> = ds.samples.iter().map(|s| s.class()).collect();
            let scores: Vec<f64> = preds.iter().map(Prediction::score).collect();
            let classes: Vec<usize> = preds
                .iter()
                .map(|p| match p {
                    Prediction::Classification { class, .. } => *class,
                    Prediction::Regression(_) => 0,
                })
                .collect();
            MetricReport::classification(&classes, &truth, &scores)
        }
    }
}

#[cfg(test)]
mod tests;
