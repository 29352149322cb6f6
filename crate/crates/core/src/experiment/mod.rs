//! Dataset generation and ingestion, experiment plans, the run loop that
//! persists checkpoints and result records, and the comparison report.

mod generate;
mod ingest;
mod plan;
mod report;
mod runner;

pub use generate::{generate_to_dir, GenerateConfig, Splits, MANIFEST_FILE, SPLIT_FILES};
pub use ingest::{delta_transform, ingest_csv, window_count, IngestSchema};
pub use plan::{DataSource, ExperimentPlan, PlanEntry, RunSpec};
pub use report::{Report, ReportRow, SeqPoint};
pub use runner::{
    attention_summary, execute_run, load_data, load_records, run_all, AttentionSummary, RunFailure, RunRecord,
    RunSummary, CHECKPOINTS_DIR, FAILURES_DIR, RESULTS_DIR,
};

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Time-ordered train share of every split.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// [`crate::synth::write_csv`] through a temp file and rename.
pub fn write_csv_atomic(ds: &crate::data::DomainDataset, path: &Path) -> Result<()> {
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    crate::synth::write_csv(ds, &tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
