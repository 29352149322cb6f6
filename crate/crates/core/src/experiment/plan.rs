use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::model::Variant;
use crate::synth::ShiftKind;
use crate::trainer::TrainingConfig;

/// Where an entry's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Generated in memory from a standard suite, one dataset per seed.
    Suite { kind: ShiftKind, samples: usize, sensors: usize },
    /// A directory holding the split files.
    Dir(PathBuf),
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            DataSource::Suite { kind, .. } => kind.to_string(),
            DataSource::Dir(p) => p
                .file_name()
                .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()),
        }
    }
}

/// One training run: an expanded plan entry at one window and one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub entry: String,
    pub data: DataSource,
    /// `None` for a data directory, whose files fix the window.
    pub window: Option<usize>,
    pub config: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub id: String,
    pub variant: Variant,
    pub task: Task,
    pub data: DataSource,
    /// Empty for a data directory.
    pub windows: Vec<usize>,
    pub seeds: Vec<u64>,
    pub overrides: toml::Table,
}

/// A list of independently executable entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub entries: Vec<PlanEntry>,
    /// Applied to every entry before its own overrides.
    pub defaults: toml::Table,
}

const ENTRY_KEYS: [&str; 11] = [
    "id", "variant", "variants", "task", "suite", "data", "samples", "sensors", "window", "windows", "repetitions",
];

fn as_str<'a>(v: &'a toml::Value, key: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::Config(format!("`{key}` must be a string")))
}

fn as_usize(v: &toml::Value, key: &str) -> Result<usize> {
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| Error::Config(format!("`{key}` must be a non-negative integer")))
}

impl ExperimentPlan {
    /// Parses a plan document. `base` is the directory relative `data`
    /// paths resolve against; `seed` replaces the plan's base seed.
    pub fn from_toml_str(text: &str, base: &Path, seed: Option<u64>) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let base_seed = match (seed, doc.remove("seed")) {
            (Some(s), _) => s,
            (None, Some(v)) => as_usize(&v, "seed")? as u64,
            (None, None) => 0,
        };
        let defaults = match doc.remove("defaults") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::Config("`defaults` must be a table".into())),
            None => toml::Table::new(),
        };
        let raw = match doc.remove("entry") {
            Some(toml::Value::Array(a)) => a,
            Some(_) => return Err(Error::Config("`entry` must be an array of tables".into())),
            None => Vec::new(),
        };
        if let Some(k) = doc.keys().next() {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        if raw.is_empty() {
            return Err(Error::Config("plan has no [[entry]] sections".into()));
        }
        let mut entries = Vec::new();
        for (i, v) in raw.into_iter().enumerate() {
            let toml::Value::Table(t) = v else {
                return Err(Error::Config(format!("entry {i} is not a table")));
            };
            entries.extend(parse_entry(i, t, base, base_seed)?);
        }
        let mut ids = BTreeSet::new();
        for e in &entries {
            if !ids.insert(e.id.clone()) {
                return Err(Error::Config(format!("duplicate entry id `{}`", e.id)));
            }
        }
        Ok(ExperimentPlan { entries, defaults })
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentPlan::from_toml_str(&text, base, seed).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every (entry, window, seed) run with its resolved config. `desk_scale`
    /// forces the base profile of every entry.
    pub fn runs(&self, desk_scale: Option<bool>) -> Result<Vec<RunSpec>> {
        let mut out = Vec::new();
        for e in &self.entries {
            let mut table = self.defaults.clone();
            table.extend(e.overrides.clone());
            table.insert("variant".into(), toml::Value::String(e.variant.name().into()));
            table.insert("task".into(), toml::Value::try_from(e.task).expect("task serializes"));
            if let Some(d) = desk_scale {
                table.insert("desk_scale".into(), toml::Value::Boolean(d));
            }
            let windows: Vec<Option<usize>> = if e.windows.is_empty() {
                vec![None]
            } else {
                e.windows.iter().copied().map(Some).collect()
            };
            for window in windows {
                for &seed in &e.seeds {
                    table.insert("seed".into(), toml::Value::Integer(seed as i64));
                    let config = TrainingConfig::from_table(table.clone())
                        .map_err(|err| Error::Config(format!("entry `{}`: {err}", e.id)))?;
                    out.push(RunSpec {
                        run_id: match window {
                            Some(w) => format!("{}-n{w}-s{seed}", e.id),
                            None => format!("{}-s{seed}", e.id),
                        },
                        entry: e.id.clone(),
                        data: e.data.clone(),
                        window,
                        config,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn parse_entry(index: usize, mut t: toml::Table, base: &Path, base_seed: u64) -> Result<Vec<PlanEntry>> {
    let overrides = match t.remove("config") {
        Some(toml::Value::Table(c)) => c,
        Some(_) => return Err(Error::Config(format!("entry {index}: `config` must be a table"))),
        None => toml::Table::new(),
    };
    if let Some(k) = t.keys().find(|k| !ENTRY_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("entry {index}: unknown key `{k}`")));
    }
    let variants: Vec<Variant> = match (t.get("variant"), t.get("variants")) {
        (Some(v), None) => vec![as_str(v, "variant")?.parse()?],
        (None, Some(toml::Value::Array(a))) => a
            .iter()
            .map(|v| as_str(v, "variants")?.parse())
            .collect::<Result<_>>()?,
        _ => return Err(Error::Config(format!("entry {index}: give exactly one of `variant` or `variants`"))),
    };
    let task: Task = match t.get("task") {
        Some(v) => v.clone().try_into().map_err(|e| Error::Config(format!("entry {index}: task: {e}")))?,
        None => Task::Regression,
    };
    let data = match (t.get("suite"), t.get("data")) {
        (Some(s), None) => DataSource::Suite {
            kind: as_str(s, "suite")?.parse()?,
            samples: t.get("samples").map(|v| as_usize(v, "samples")).transpose()?.unwrap_or(1000),
            sensors: t.get("sensors").map(|v| as_usize(v, "sensors")).transpose()?.unwrap_or(4),
        },
        (None, Some(d)) => DataSource::Dir(base.join(as_str(d, "data")?)),
        _ => return Err(Error::Config(format!("entry {index}: give exactly one of `suite` or `data`"))),
    };
    let windows = match (t.get("window"), t.get("windows")) {
        (Some(w), None) => vec![as_usize(w, "window")?],
        (None, Some(toml::Value::Array(a))) => a.iter().map(|v| as_usize(v, "windows")).collect::<Result<_>>()?,
        (None, None) => vec![6],
        _ => return Err(Error::Config(format!("entry {index}: give at most one of `window` or `windows`"))),
    };
    if windows.is_empty() {
        return Err(Error::Config(format!("entry {index}: `windows` is empty")));
    }
    let windows = match data {
        DataSource::Dir(_) if t.contains_key("window") || t.contains_key("windows") => {
            return Err(Error::Config(format!("entry {index}: the window of a data directory is fixed by its files")));
        }
        DataSource::Dir(_) => Vec::new(),
        DataSource::Suite { .. } => windows,
    };
    let repetitions = t.get("repetitions").map(|v| as_usize(v, "repetitions")).transpose()?.unwrap_or(1);
    if repetitions == 0 {
        return Err(Error::Config(format!("entry {index}: `repetitions` must be positive")));
    }
    let seeds: Vec<u64> = (0..repetitions as u64).map(|r| base_seed + r).collect();
    let id = t.get("id").map(|v| as_str(v, "id")).transpose()?;
    Ok(variants
        .into_iter()
        .map(|variant| PlanEntry {
            id: match (id, t.contains_key("variants")) {
                (Some(id), false) => id.to_string(),
                (Some(id), true) => format!("{id}-{variant}"),
                (None, _) => format!("{variant}-{}", data.label()),
            },
            variant,
            task,
            data: data.clone(),
            windows: windows.clone(),
            seeds: seeds.clone(),
            overrides: overrides.clone(),
        })
        .collect())
}
