//! Experiment driver and result summarizer.
//!
//! [`run_experiment`] runs every requested method on the same problem and
//! seed ladder, writing one history CSV and one JSON summary per run, one
//! aggregate CSV per method, the fitted projection spectrum where there is
//! one, a manifest, and a summary table. [`summarize`] rebuilds that table
//! from the per-run CSVs alone, so each figure in it can be audited against
//! the raw files; re-running it on unchanged outputs reproduces the table
//! byte for byte.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::format_float;
use crate::optimizer::{
    aggregate_incumbents, aggregate_to_csv, run_repeats, Method, OptimizerConfig, RunRecord,
};
use crate::problems::{self, Problem};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "experiment.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_CSV_HEADER: &str =
    "method,mean_best,gap_percent,mean_time_s,time_saving_percent,successful_runs,repeats";
pub const SPECTRUM_CSV_HEADER: &str = "component,eigenvalue";

/// One problem, a set of methods to compare on it, and where to write results.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Registry name of the problem.
    pub problem: String,
    /// Optional JSON object of problem parameters.
    pub overrides: Option<serde_json::Value>,
    /// Methods to run, each with the same budget and seed ladder.
    pub methods: Vec<Method>,
    /// Shared run configuration; its `method` field is replaced per entry of
    /// `methods`.
    pub config: OptimizerConfig,
    pub repeats: usize,
    pub output_dir: PathBuf,
}

/// One row of the summary table.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean final incumbent over successful runs; NaN when none succeeded.
    pub mean_best: f64,
    /// Percent gap of `mean_best` to the problem's known optimum, when both
    /// exist and the optimum is nonzero.
    pub gap_percent: Option<f64>,
    /// Mean per-run wall time of the optimization loop, seconds.
    pub mean_time_s: f64,
    /// Percent of wall time saved relative to the full method, when it ran.
    pub time_saving_percent: Option<f64>,
    /// Runs that found at least one feasible design.
    pub successful_runs: usize,
    pub repeats: usize,
}

/// Everything [`run_experiment`] produced: the summary rows in method order
/// and a note per run that aborted early. Aborted runs still leave their
/// partial CSVs behind.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summaries: Vec<MethodSummary>,
    pub failed_runs: Vec<String>,
}

pub fn run_csv_name(method: Method, repeat: usize) -> String {
    format!("{}_run{repeat:02}.csv", method.as_str())
}

pub fn run_summary_name(method: Method, repeat: usize) -> String {
    format!("{}_run{repeat:02}.json", method.as_str())
}

pub fn aggregate_csv_name(method: Method) -> String {
    format!("{}_aggregate.csv", method.as_str())
}

pub fn spectrum_csv_name(method: Method) -> String {
    format!("{}_spectrum.csv", method.as_str())
}

/// Sizes the shared worker pool. Effective once per process, before any
/// parallel work; the pool size changes scheduling only, never results.
pub fn configure_workers(threads: usize) -> Result<()> {
    crate::par::configure_pool(threads)
}

/// Builds the problem from the registry and runs the experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let problem = problems::build(&spec.problem, spec.overrides.as_ref())?;
    run_experiment_on(problem.as_ref(), spec)
}

/// Runs the experiment on an already constructed problem. `spec.problem` and
/// `spec.overrides` are only echoed into the manifest.
pub fn run_experiment_on(problem: &dyn Problem, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.methods.is_empty() {
        return Err(Error::Config("experiment needs at least one method".into()));
    }
    for (i, m) in spec.methods.iter().enumerate() {
        if spec.methods[..i].contains(m) {
            return Err(Error::Config(format!(
                "method {} is listed twice",
                m.as_str()
            )));
        }
    }
    if spec.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    fs::create_dir_all(&spec.output_dir)?;
    write_manifest(problem, spec)?;

    let mut failed_runs = Vec::new();
    for &method in &spec.methods {
        let mut config = spec.config.clone();
        config.method = method;
        let records = run_repeats(problem, &config, spec.repeats)?;
        for (rep, record) in records.iter().enumerate() {
            record.to_csv(&spec.output_dir.join(run_csv_name(method, rep)))?;
            record.write_summary(&spec.output_dir.join(run_summary_name(method, rep)))?;
            if let Some(err) = &record.error {
                failed_runs.push(format!("{} run {rep}: {err}", method.as_str()));
            }
        }
        let aggregate = aggregate_incumbents(&records);
        aggregate_to_csv(&aggregate, &spec.output_dir.join(aggregate_csv_name(method)))?;
        if let Some(spectrum) = records.iter().find_map(|r| r.initial_spectrum.as_deref()) {
            write_spectrum(&spec.output_dir.join(spectrum_csv_name(method)), spectrum)?;
        }
    }

    let summaries = summarize(&spec.output_dir)?;
    Ok(ExperimentReport {
        summaries,
        failed_runs,
    })
}

fn write_manifest(problem: &dyn Problem, spec: &ExperimentSpec) -> Result<()> {
    let methods: Vec<&str> = spec.methods.iter().map(|m| m.as_str()).collect();
    let value = serde_json::json!({
        "problem": problem.name(),
        "overrides": spec.overrides,
        "methods": methods,
        "repeats": spec.repeats,
        "known_optimum": problem.known_optimum(),
        "seed": spec.config.seed,
        "doe_size": spec.config.doe_size,
        "batch_size": spec.config.batch_size,
        "budget": spec.config.budget,
    });
    let file = fs::File::create(spec.output_dir.join(MANIFEST_FILE))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &value)?;
    w.flush()?;
    Ok(())
}

fn write_spectrum(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SPECTRUM_CSV_HEADER}")?;
    for (i, ev) in eigenvalues.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, format_float(*ev))?;
    }
    w.flush()?;
    Ok(())
}

struct Manifest {
    methods: Vec<Method>,
    repeats: usize,
    known_optimum: Option<f64>,
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::Config(format!(
            "missing experiment files in {}: {MANIFEST_FILE}",
            dir.display()
        )));
    }
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let methods = value
        .get("methods")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Config("manifest has no method list".into()))?
        .iter()
        .map(|m| {
            m.as_str()
                .ok_or_else(|| Error::Config("manifest method is not a string".into()))
                .and_then(Method::from_str)
        })
        .collect::<Result<Vec<Method>>>()?;
    let repeats = value
        .get("repeats")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Config("manifest has no repeat count".into()))?
        as usize;
    let known_optimum = value.get("known_optimum").and_then(|v| v.as_f64());
    if methods.is_empty() || repeats == 0 {
        return Err(Error::Config(
            "manifest lists no methods or no repeats".into(),
        ));
    }
    Ok(Manifest {
        methods,
        repeats,
        known_optimum,
    })
}

/// Rebuilds the summary table from the per-run CSVs in `dir` and rewrites
/// `summary.csv` there.
///
/// A run counts as successful when any of its rows is feasible; its final
/// incumbent then feeds the method's mean best objective. Wall time is the
/// sum of the `iter_time_s` column, so the table never depends on state
/// outside the CSV files. Missing run files fail the call and are all named
/// in the error.
pub fn summarize(dir: &Path) -> Result<Vec<MethodSummary>> {
    let manifest = read_manifest(dir)?;

    let mut missing = Vec::new();
    for &method in &manifest.methods {
        for rep in 0..manifest.repeats {
            let name = run_csv_name(method, rep);
            if !dir.join(&name).is_file() {
                missing.push(name);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing run files in {}: {}",
            dir.display(),
            missing.join(", ")
        )));
    }

    let mut rows = Vec::new();
    for &method in &manifest.methods {
        let mut final_bests = Vec::new();
        let mut times = Vec::new();
        for rep in 0..manifest.repeats {
            let history = RunRecord::history_from_csv(&dir.join(run_csv_name(method, rep)))?;
            times.push(history.iter().map(|e| e.iter_time_s).sum::<f64>());
            if history.iter().any(|e| e.feasible) {
                if let Some(last) = history.last() {
                    final_bests.push(last.incumbent);
                }
            }
        }
        let successful_runs = final_bests.len();
        let mean_best = if final_bests.is_empty() {
            f64::NAN
        } else {
            final_bests.iter().sum::<f64>() / final_bests.len() as f64
        };
        let mean_time_s = times.iter().sum::<f64>() / times.len() as f64;
        let gap_percent = match manifest.known_optimum {
            Some(opt) if mean_best.is_finite() && opt != 0.0 => {
                Some(100.0 * (mean_best - opt) / opt)
            }
            _ => None,
        };
        rows.push(MethodSummary {
            method,
            mean_best,
            gap_percent,
            mean_time_s,
            time_saving_percent: None,
            successful_runs,
            repeats: manifest.repeats,
        });
    }

    let full_time = rows
        .iter()
        .find(|r| r.method == Method::Full)
        .map(|r| r.mean_time_s);
    if let Some(full) = full_time {
        for row in &mut rows {
            row.time_saving_percent = Some(if full > 0.0 {
                100.0 * (full - row.mean_time_s) / full
            } else {
                0.0
            });
        }
    }

    write_summary_csv(&dir.join(SUMMARY_FILE), &rows)?;
    Ok(rows)
}

fn csv_cell(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        _ => String::new(),
    }
}

fn write_summary_csv(path: &Path, rows: &[MethodSummary]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.method.as_str(),
            csv_cell(Some(r.mean_best)),
            csv_cell(r.gap_percent),
            csv_cell(Some(r.mean_time_s)),
            csv_cell(r.time_saving_percent),
            r.successful_runs,
            r.repeats,
        )?;
    }
    w.flush()?;
    Ok(())
}

fn table_cell(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => format!("{v:.4}"),
        _ => "-".into(),
    }
}

/// Renders the summary rows as an aligned text table for terminal output.
pub fn format_summary_table(rows: &[MethodSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>14} {:>10} {:>12} {:>10} {:>9}\n",
        "method", "mean_best", "gap_%", "time_s", "saving_%", "success"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:>14} {:>10} {:>12} {:>10} {:>9}\n",
            r.method.as_str(),
            table_cell(Some(r.mean_best)),
            table_cell(r.gap_percent),
            table_cell(Some(r.mean_time_s)),
            table_cell(r.time_saving_percent),
            format!("{}/{}", r.successful_runs, r.repeats),
        ));
    }
    out
}
