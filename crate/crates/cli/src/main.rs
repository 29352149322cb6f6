use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cmtn::experiment::{
    generate_to_dir, ingest_csv, load_records, run_all, write_csv_atomic, ExperimentPlan, GenerateConfig, IngestSchema,
    Report,
};

/// Domain-adaptive time-series models: data generation, training runs and reports.
#[derive(Parser)]
#[command(name = "cmtn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target dataset with train/test splits.
    Generate {
        /// Generator config or a previously written manifest.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every entry of an experiment plan.
    Train {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Base seed; repetitions use consecutive seeds from here.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        scale: Scale,
    },
    /// Summarize a results directory.
    Report {
        results: PathBuf,
        /// Defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Window an external CSV file into train/test splits.
    Ingest {
        csv: PathBuf,
        /// Schema naming sensor, delta, label and timestamp columns.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct Scale {
    /// Force the small single-machine profile.
    #[arg(long)]
    desk_scale: bool,
    /// Force the full-size profile.
    #[arg(long)]
    paper_scale: bool,
}

impl Scale {
    fn choice(&self) -> Option<bool> {
        match (self.desk_scale, self.paper_scale) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

fn generate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = GenerateConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    for p in generate_to_dir(&cfg, out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn train(plan: &Path, out: &Path, seed: Option<u64>, scale: &Scale) -> Result<bool> {
    let plan = ExperimentPlan::load(plan, seed)?;
    let runs = plan.runs(scale.choice())?;
    let total = runs.len();
    let mut done = 0;
    let summary = run_all(&runs, out, |spec, outcome| {
        done += 1;
        match outcome {
            Ok(r) => {
                let metric = r.primary_metric().map_or_else(|| "-".into(), |m| format!("{m:.4}"));
                eprintln!("[{done}/{total}] {} target {metric} ({:.1}s)", r.run_id, r.result.wall_clock_secs);
            }
            Err(e) => eprintln!("[{done}/{total}] entry `{}` run {} aborted: {e}", spec.entry, spec.run_id),
        }
    })?;
    println!("{} runs completed, {} aborted, results in {}", summary.completed.len(), summary.failed.len(), out.display());
    Ok(summary.failed.is_empty())
}

fn report(results: &Path, out: Option<&Path>) -> Result<()> {
    let records = load_records(results)?;
    let report = Report::build(&records).with_context(|| format!("reporting on {}", results.display()))?;
    report.write(out.unwrap_or(results))?;
    print!("{}", report.to_text());
    Ok(())
}

fn ingest(csv: &Path, config: &Path, out: &Path) -> Result<()> {
    let schema = IngestSchema::load(config)?;
    let (train, test) = ingest_csv(csv, &schema)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let domain = format!("{:?}", schema.domain).to_lowercase();
    for (split, ds) in [("train", &train), ("test", &test)] {
        let path = out.join(format!("{domain}_{split}.csv"));
        write_csv_atomic(ds, &path)?;
        println!("{} ({} windows)", path.display(), ds.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate { config, out, seed } => generate(config, out, *seed).map(|_| true),
        Command::Train { plan, out, seed, scale } => train(plan, out, *seed, scale),
        Command::Report { results, out } => report(results, out.as_deref()).map(|_| true),
        Command::Ingest { csv, config, out } => ingest(csv, config, out).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
