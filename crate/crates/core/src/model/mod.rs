//! The assembled network: forward pass per variant, the adversarial
//! objective, target prediction, and checkpoints.

mod checkpoint;
mod objective;
mod params;
mod variant;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT};
pub use objective::{LossOptions, LossReport};
pub use params::{CmtnParams, CmtnVars, Partition, SharedParams};
pub use variant::Variant;

use serde::{Deserialize, Serialize};

use crate::data::{Domain, DomainDataset, Task};
use crate::error::{Error, Result};
use crate::layers::{
    dynamic_attention, feature_extract, head_forward, lstm_step, temporal_attention, Dropout,
};
use crate::rng;
use crate::tensor::{softmax, Tape, Tensor, Var};

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// `M`
    pub sensors: usize,
    /// `K`
    pub features: usize,
    /// `H`
    pub hidden: usize,
    /// Inner width of the dynamic attention scorer.
    pub attention: usize,
    /// Hidden width of both heads.
    pub mlp_hidden: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let all = [self.sensors, self.features, self.hidden, self.attention, self.mlp_hidden];
        if all.contains(&0) {
            return Err(Error::Config(format!("model widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Per-sensor input standardization and, for regression, label scaling.
/// Fitted on source training data and applied identically to both domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    /// Target-domain input statistics, when that domain is standardized
    /// separately.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_std: Option<Vec<f64>>,
    pub label_mean: f64,
    pub label_std: f64,
}

impl Scaler {
    pub fn identity(sensors: usize) -> Self {
        Scaler {
            input_mean: vec![0.0; sensors],
            input_std: vec![1.0; sensors],
            target_mean: None,
            target_std: None,
            label_mean: 0.0,
            label_std: 1.0,
        }
    }

    pub fn fit(data: &DomainDataset) -> Result<Self> {
        let (input_mean, input_std) = column_stats(data)?;
        let (label_mean, label_std) = match data.task {
            Task::Regression => {
                let n = data.len();
                let s: f64 = data.samples.iter().map(|s| s.y).sum();
                let q: f64 = data.samples.iter().map(|s| s.y * s.y).sum();
                mean_std(s, q, n)
            }
            Task::Classification => (0.0, 1.0),
        };
        Ok(Scaler {
            input_mean,
            input_std,
            target_mean: None,
            target_std: None,
            label_mean,
            label_std,
        })
    }

    /// Standardizes target-domain inputs with their own statistics.
    pub fn fit_target(&mut self, target: &DomainDataset) -> Result<()> {
        let (mean, std) = column_stats(target)?;
        if mean.len() != self.input_mean.len() {
            return Err(Error::Data("target sensor count differs from the source".into()));
        }
        self.target_mean = Some(mean);
        self.target_std = Some(std);
        Ok(())
    }

    fn stats_for(&self, domain: Domain) -> (&[f64], &[f64]) {
        match (domain, &self.target_mean, &self.target_std) {
            (Domain::Target, Some(m), Some(s)) => (m, s),
            _ => (&self.input_mean, &self.input_std),
        }
    }

    /// Standardizes with source statistics.
    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        self.transform_for(x, Domain::Source)
    }

    pub fn transform_for(&self, x: &Tensor, domain: Domain) -> Result<Tensor> {
        let (mean, std) = self.stats_for(domain);
        let m = mean.len();
        if x.shape().len() != 2 || x.cols() != m {
            return Err(Error::Dimension {
                op: "scaler",
                left: x.shape().to_vec(),
                right: vec![m],
            });
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(m) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) / std[j];
            }
        }
        Ok(out)
    }

    pub fn scale_label(&self, y: f64) -> f64 {
        (y - self.label_mean) / self.label_std
    }

    pub fn unscale_label(&self, y: f64) -> f64 {
        y * self.label_std + self.label_mean
    }
}

fn column_stats(data: &DomainDataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = data
        .sensors()
        .ok_or_else(|| Error::Data("cannot fit a scaler on an empty dataset".into()))?;
    // Non-finite readings are left out so a bad sample surfaces in the loss.
    let mut sum = vec![0.0; m];
    let mut sq = vec![0.0; m];
    let mut count = vec![0usize; m];
    for s in &data.samples {
        for row in s.x.data().chunks(m) {
            for (j, v) in row.iter().enumerate().filter(|(_, v)| v.is_finite()) {
                sum[j] += v;
                sq[j] += v * v;
                count[j] += 1;
            }
        }
    }
    Ok((0..m).map(|j| mean_std(sum[j], sq[j], count[j])).unzip())
}

fn mean_std(sum: f64, sq: f64, n: usize) -> (f64, f64) {
    let n = n.max(1) as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0);
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

/// Settings for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardMode {
    pub training: bool,
    /// Gradient reversal strength in front of the domain head.
    pub lambda: f64,
    pub dropout_rate: f64,
    pub dropout_seed: u64,
}

impl ForwardMode {
    pub fn eval() -> Self {
        ForwardMode {
            training: false,
            lambda: 0.0,
            dropout_rate: 0.0,
            dropout_seed: 0,
        }
    }

    pub fn train(lambda: f64, dropout_rate: f64, dropout_seed: u64) -> Self {
        ForwardMode {
            training: true,
            lambda,
            dropout_rate,
            dropout_seed,
        }
    }
}

/// Values produced by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    /// `1 x 1` for regression (in standardized label units), `1 x 2` logits
    /// for classification.
    pub label: Tensor,
    /// `1 x 2`, absent without a domain head.
    pub domain_logits: Option<Tensor>,
    /// One `K`-vector per time step.
    pub alpha: Option<Vec<Vec<f64>>>,
    /// Weights over `h_1..h_{N-1}`.
    pub gamma: Option<Vec<f64>>,
    pub context: Tensor,
}

/// Output of [`Cmtn::predict_target`].
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Regression(f64),
    Classification { class: usize, scores: Vec<f64> },
}

impl Prediction {
    /// Regression value, or the probability of class 1.
    pub fn score(&self) -> f64 {
        match self {
            Prediction::Regression(v) => *v,
            Prediction::Classification { scores, .. } => scores[1],
        }
    }
}

/// Tape handles of one pass.
pub(crate) struct Pass {
    pub label: Option<Var>,
    pub domain: Option<Var>,
    pub alpha: Vec<Var>,
    pub gamma: Option<Var>,
    pub context: Var,
}

/// A configured network: wiring, widths, parameters and input scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Cmtn {
    pub variant: Variant,
    pub task: Task,
    pub dims: ModelDims,
    pub params: CmtnParams,
    pub scaler: Scaler,
}

impl Cmtn {
    pub fn new(variant: Variant, task: Task, dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        Ok(Cmtn {
            variant,
            task,
            dims,
            params: CmtnParams::init(&dims, variant, task, seed),
            scaler: Scaler::identity(dims.sensors),
        })
    }

    pub fn zeros(variant: Variant, task: Task, dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        Ok(Cmtn {
            variant,
            task,
            dims,
            params: CmtnParams::zeros(&dims, variant, task),
            scaler: Scaler::identity(dims.sensors),
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        let min_rows = if self.variant.has_temporal_attention() { 2 } else { 1 };
        if s.len() != 2 || s[1] != self.dims.sensors || s[0] < min_rows {
            return Err(Error::Dimension {
                op: "forward",
                left: s.to_vec(),
                right: vec![min_rows, self.dims.sensors],
            });
        }
        Ok(())
    }

    /// Records the pass on `tape`. `x` is already standardized.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        &self,
        tape: &mut Tape,
        vars: &CmtnVars,
        x: &Tensor,
        domain: Domain,
        mode: &ForwardMode,
        with_label: bool,
        with_domain: bool,
    ) -> Result<Pass> {
        self.check_input(x)?;
        let v = self.variant;
        if v == Variant::LstmS2t && mode.training && domain == Domain::Target {
            return Err(Error::Usage("LSTM_S2T cannot train on target samples".into()));
        }
        let n = x.rows();
        let h_dim = self.dims.hidden;
        let x = tape.constant(x.clone());
        let f = if v.has_domain_extractors() {
            let ext = match domain {
                Domain::Source => vars.theta_s,
                Domain::Target => vars.theta_t,
            };
            feature_extract(tape, x, ext)?
        } else if v.has_extractor() {
            let p = vars.projection;
            let lin = tape.matmul(x, p.weight)?;
            let bias = crate::layers::tile_rows(tape, p.bias, n)?;
            tape.add(lin, bias)?
        } else {
            x
        };

        let mut h = tape.constant(Tensor::zeros(&[1, h_dim]));
        let mut c = tape.constant(Tensor::zeros(&[1, h_dim]));
        let mut hs = Vec::with_capacity(n);
        let mut alpha = Vec::new();
        for t in 0..n {
            let f_t = tape.slice_rows(f, t, t + 1)?;
            let input = if v.has_dynamic_attention() {
                let att = dynamic_attention(tape, h, f_t, vars.dynamic)?;
                alpha.push(att.alpha);
                att.weighted
            } else {
                f_t
            };
            (h, c) = lstm_step(tape, input, h, c, vars.lstm)?;
            hs.push(h);
        }

        let (context, gamma) = if v.has_temporal_attention() {
            let stacked = tape.concat(&hs, 0)?;
            let att = temporal_attention(tape, stacked, vars.temporal)?;
            (att.context, Some(att.gamma))
        } else {
            (h, None)
        };

        let dropout = |head: &str| Dropout {
            rate: mode.dropout_rate,
            training: mode.training,
            seed: rng::derive_seed(mode.dropout_seed, head, &[]),
        };
        let label = if with_label {
            Some(head_forward(tape, context, vars.phi_l, dropout("phi_l"))?)
        } else {
            None
        };
        let domain = if with_domain && v.is_adversarial() {
            let reversed = tape.gradient_reversal(context, mode.lambda)?;
            Some(head_forward(tape, reversed, vars.phi_d, dropout("phi_d"))?)
        } else {
            None
        };
        Ok(Pass {
            label,
            domain,
            alpha,
            gamma,
            context,
        })
    }

    /// Full forward pass on a raw (unscaled) window.
    pub fn forward(&self, x: &Tensor, domain: Domain, mode: &ForwardMode) -> Result<ForwardRecord> {
        let xs = self.scaler.transform_for(x, domain)?;
        let mut tape = Tape::new();
        let (vars, _) = self.params.bind(&mut tape);
        let pass = self.build(&mut tape, &vars, &xs, domain, mode, true, true)?;
        let label = pass.label.map(|l| tape.value(l).clone()).expect("label head requested");
        Ok(ForwardRecord {
            label,
            domain_logits: pass.domain.map(|d| tape.value(d).clone()),
            alpha: self
                .variant
                .has_dynamic_attention()
                .then(|| pass.alpha.iter().map(|a| tape.value(*a).data().to_vec()).collect()),
            gamma: pass.gamma.map(|g| tape.value(g).data().to_vec()),
            context: tape.value(pass.context).clone(),
        })
    }

    /// Converts a label-head output into a prediction in original units.
    pub fn interpret(&self, label: &Tensor) -> Result<Prediction> {
        match self.task {
            Task::Regression => Ok(Prediction::Regression(self.scaler.unscale_label(label.data()[0]))),
            Task::Classification => {
                let scores = softmax(label.data())?;
                let class = usize::from(scores[1] > scores[0]);
                Ok(Prediction::Classification { class, scores })
            }
        }
    }

    /// Sets `θ_T` to `θ_S` followed by a per-feature affine that gives the
    /// target pre-activations the source's mean and spread. Inputs are raw
    /// windows of each domain.
    pub fn match_target_moments(&mut self, source: &[&Tensor], target: &[&Tensor]) -> Result<()> {
        let stats = |xs: &[&Tensor], domain: Domain| -> Result<(Vec<f64>, Vec<f64>)> {
            let k = self.dims.features;
            let (mut sum, mut sq, mut n) = (vec![0.0; k], vec![0.0; k], 0usize);
            for x in xs {
                let z = self.scaler.transform_for(x, domain)?;
                let rows = z.rows();
                let mut pre = vec![0.0; rows * k];
                crate::tensor::matmul_into(z.data(), self.params.theta_s.weight.data(), &mut pre, rows, z.cols(), k);
                for row in pre.chunks(k) {
                    if row.iter().any(|v| !v.is_finite()) {
                        continue;
                    }
                    for j in 0..k {
                        let v = row[j] + self.params.theta_s.bias.data()[j];
                        sum[j] += v;
                        sq[j] += v * v;
                    }
                }
                n += pre.chunks(k).filter(|r| r.iter().all(|v| v.is_finite())).count();
            }
            if n == 0 {
                return Err(Error::Data("moment matching needs samples from both domains".into()));
            }
            Ok((0..k).map(|j| mean_std(sum[j], sq[j], n)).unzip())
        };
        let (mu_s, sd_s) = stats(source, Domain::Source)?;
        let (mu_t, sd_t) = stats(target, Domain::Target)?;
        let k = self.dims.features;
        let mut theta_t = self.params.theta_s.clone();
        for j in 0..k {
            let a = sd_s[j] / sd_t[j];
            let c = mu_s[j] - a * mu_t[j];
            for row in theta_t.weight.data_mut().chunks_mut(k) {
                row[j] *= a;
            }
            let b = &mut theta_t.bias.data_mut()[j];
            *b = a * *b + c;
        }
        self.params.theta_t = theta_t;
        Ok(())
    }

    /// Target-domain prediction through `θ_T`, `θ_C` and `φ_l` only.
    pub fn predict_target(&self, x: &Tensor) -> Result<Prediction> {
        self.predict(x, Domain::Target)
    }

    pub fn predict(&self, x: &Tensor, domain: Domain) -> Result<Prediction> {
        let xs = self.scaler.transform_for(x, domain)?;
        let mut tape = Tape::new();
        let (vars, _) = self.params.bind(&mut tape);
        let pass = self.build(&mut tape, &vars, &xs, domain, &ForwardMode::eval(), true, false)?;
        self.interpret(tape.value(pass.label.expect("label head requested")))
    }
}

#[cfg(test)]
mod tests;
