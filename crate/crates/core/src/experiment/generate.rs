use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, write_csv_atomic, TRAIN_FRACTION};
use crate::data::{DomainDataset, Task};
use crate::error::{Error, Result};
use crate::synth::{calibrate_threshold, generate_domain, shift_suite, DomainSpec, GeneratorConfig, ShiftKind};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// The four split files of a generated or ingested dataset directory.
pub const SPLIT_FILES: [&str; 4] = ["source_train.csv", "source_test.csv", "target_train.csv", "target_test.csv"];

/// Generator settings. A written manifest is itself a valid config and
/// regenerates the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default)]
    pub suite: Option<ShiftKind>,
    pub seed: u64,
    #[serde(default = "default_sensors")]
    pub sensors: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Explicit specs; when absent they come from `suite`.
    #[serde(default)]
    pub source: Option<DomainSpec>,
    #[serde(default)]
    pub target: Option<DomainSpec>,
    /// Written by `generate`, ignored on input.
    #[serde(default)]
    pub files: Vec<String>,
}

fn default_sensors() -> usize {
    4
}
fn default_window() -> usize {
    6
}
fn default_samples() -> usize {
    1000
}
fn default_task() -> Task {
    Task::Regression
}
fn default_burn_in() -> usize {
    50
}

impl GenerateConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GenerateConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            sensors: self.sensors,
            window: self.window,
            samples: self.samples,
            task: self.task,
            seed: self.seed,
            burn_in: self.burn_in,
        }
    }

    /// Fills in the domain specs from the suite.
    pub fn resolve(&self) -> Result<Self> {
        let mut out = self.clone();
        if out.source.is_none() || out.target.is_none() {
            let kind = self
                .suite
                .ok_or_else(|| Error::Config("either `suite` or both `source` and `target` are required".into()))?;
            let mut suite = shift_suite(kind, self.sensors);
            let threshold = calibrate_threshold(self.seed, 0.92);
            suite.source.fault_threshold = threshold;
            suite.target.fault_threshold = threshold;
            out.source.get_or_insert(suite.source);
            out.target.get_or_insert(suite.target);
        }
        out.files = SPLIT_FILES.iter().map(|f| f.to_string()).collect();
        Ok(out)
    }
}

/// Source and target datasets split 80/20 in time order.
pub struct Splits {
    pub source_train: DomainDataset,
    pub source_test: DomainDataset,
    pub target_train: DomainDataset,
    pub target_test: DomainDataset,
}

impl Splits {
    pub fn generate(cfg: &GenerateConfig) -> Result<(GenerateConfig, Splits)> {
        let cfg = cfg.resolve()?;
        let g = cfg.generator();
        let (source, target) = (cfg.source.as_ref().expect("resolved"), cfg.target.as_ref().expect("resolved"));
        if source.domain == target.domain {
            return Err(Error::Config("source and target specs name the same domain".into()));
        }
        let (source_train, source_test) = generate_domain(source, &g)?.split_at_fraction(TRAIN_FRACTION);
        let (target_train, target_test) = generate_domain(target, &g)?.split_at_fraction(TRAIN_FRACTION);
        Ok((cfg, Splits { source_train, source_test, target_train, target_test }))
    }

    fn parts(&self) -> [&DomainDataset; 4] {
        [&self.source_train, &self.source_test, &self.target_train, &self.target_test]
    }

    /// Reads the split files of `dir`; `source_test.csv` may be missing.
    pub fn read_dir(dir: &Path, task: Task) -> Result<Splits> {
        let read = |name: &str| crate::synth::read_csv(&dir.join(name), task);
        let source_test = if dir.join(SPLIT_FILES[1]).exists() {
            read(SPLIT_FILES[1])?
        } else {
            DomainDataset::new(crate::data::Domain::Source, task, Vec::new())?
        };
        Ok(Splits {
            source_train: read(SPLIT_FILES[0])?,
            source_test,
            target_train: read(SPLIT_FILES[2])?,
            target_test: read(SPLIT_FILES[3])?,
        })
    }
}

/// Writes the four split files and the manifest into `out`.
pub fn generate_to_dir(cfg: &GenerateConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (resolved, splits) = Splits::generate(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (name, ds) in SPLIT_FILES.iter().zip(splits.parts()) {
        let path = out.join(name);
        write_csv_atomic(ds, &path)?;
        written.push(path);
    }
    let manifest = toml::to_string(&resolved).map_err(|e| Error::Config(e.to_string()))?;
    let path = out.join(MANIFEST_FILE);
    write_atomic(&path, manifest.as_bytes())?;
    written.push(path);
    Ok(written)
}
