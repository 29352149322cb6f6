use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cmtn, ModelDims, Scaler, Variant};
use crate::data::Task;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "cmtn-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Self-describing JSON container for a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub variant: Variant,
    pub task: Task,
    pub dims: ModelDims,
    pub scaler: Scaler,
    /// The training configuration that produced the parameters.
    pub config: Option<serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Cmtn, config: Option<serde_json::Value>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            variant: model.variant,
            task: model.task,
            dims: model.dims,
            scaler: model.scaler.clone(),
            config,
            tensors: model
                .params
                .named()
                .into_iter()
                .map(|(name, _, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Cmtn> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format `{}`", self.format)));
        }
        let mut model = Cmtn::zeros(self.variant, self.task, self.dims)?;
        let expected: Vec<(String, Vec<usize>)> = model
            .params
            .named()
            .into_iter()
            .map(|(n, _, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, expected {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        let sc = &self.scaler;
        let widths = [Some(&sc.input_mean), Some(&sc.input_std), sc.target_mean.as_ref(), sc.target_std.as_ref()];
        if widths.into_iter().flatten().any(|v| v.len() != self.dims.sensors)
            || sc.target_mean.is_some() != sc.target_std.is_some()
        {
            return Err(Error::Data("scaler width does not match the sensor count".into()));
        }
        let slots = model.params.tensors_mut();
        for ((slot, (name, shape)), stored) in slots.into_iter().zip(&expected).zip(self.tensors) {
            if &stored.name != name || &stored.shape != shape {
                return Err(Error::Data(format!(
                    "checkpoint tensor `{}` {:?} does not match `{name}` {shape:?}",
                    stored.name, stored.shape
                )));
            }
            *slot = Tensor::new(stored.shape, stored.values)?;
        }
        model.scaler = self.scaler;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

impl Cmtn {
    pub fn save(&self, path: &Path, config: Option<serde_json::Value>) -> Result<()> {
        Checkpoint::from_model(self, config).save(path)
    }

    pub fn load(path: &Path) -> Result<Cmtn> {
        Checkpoint::load(path)?.into_model()
    }
}
