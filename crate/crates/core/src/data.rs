//! Samples and per-domain datasets shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// Source is domain label 0, target is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn label(self) -> usize {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }

    pub fn from_label(d: usize) -> Result<Self> {
        match d {
            0 => Ok(Domain::Source),
            1 => Ok(Domain::Target),
            other => Err(Error::Argument(format!("domain label {other} is not 0 or 1"))),
        }
    }
}

/// Latent values retained by the synthetic generator for its oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub driver: f64,
    pub response: f64,
}

/// One `N x M` window of sensor readings with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSample {
    pub x: Tensor,
    /// Regression target, or the class index stored as a float.
    pub y: f64,
    pub domain: Domain,
    pub latent: Option<Latent>,
}

impl TimeSeriesSample {
    pub fn class(&self) -> usize {
        self.y as usize
    }

    pub fn window(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn sensors(&self) -> usize {
        self.x.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain: Domain,
    pub task: Task,
    pub samples: Vec<TimeSeriesSample>,
}

impl DomainDataset {
    pub fn new(domain: Domain, task: Task, samples: Vec<TimeSeriesSample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let (n, m) = (first.window(), first.sensors());
            if samples.iter().any(|s| s.window() != n || s.sensors() != m) {
                return Err(Error::Data("samples disagree on window or sensor count".into()));
            }
        }
        if task == Task::Classification && samples.iter().any(|s| s.y != 0.0 && s.y != 1.0) {
            return Err(Error::Data("classification labels must be 0 or 1".into()));
        }
        Ok(DomainDataset {
            domain,
            task,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window(&self) -> Option<usize> {
        self.samples.first().map(TimeSeriesSample::window)
    }

    pub fn sensors(&self) -> Option<usize> {
        self.samples.first().map(TimeSeriesSample::sensors)
    }

    /// Splits by time order: the first `floor(fraction * len)` samples train.
    pub fn split_at_fraction(&self, fraction: f64) -> (DomainDataset, DomainDataset) {
        let cut = (fraction * self.len() as f64).floor() as usize;
        let mk = |s: &[TimeSeriesSample]| DomainDataset {
            domain: self.domain,
            task: self.task,
            samples: s.to_vec(),
        };
        (mk(&self.samples[..cut]), mk(&self.samples[cut..]))
    }

    pub fn count_class(&self, class: usize) -> usize {
        self.samples.iter().filter(|s| s.class() == class).count()
    }
}
