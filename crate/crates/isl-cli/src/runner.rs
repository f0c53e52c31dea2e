use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use isl_core::fit::loglog_slope;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiments::{runner, Recorder};
use crate::record::{ExperimentRecord, Status};
use crate::CliError;

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}

/// Runs one experiment on the current rayon pool and writes config.json and record.json
/// into `out`. Numerical failures end up in the record, not in the return value.
fn execute(
    cfg: &ExperimentConfig,
    out: &Path,
    workers: usize,
) -> Result<ExperimentRecord, CliError> {
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    std::fs::write(out.join("config.json"), cfg.to_json()).map_err(|e| io(out, e))?;
    let start = Instant::now();
    let mut rec = Recorder::new(out);
    let failure = match catch_unwind(AssertUnwindSafe(|| runner(cfg.experiment)(cfg, &mut rec))) {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(e.to_string()),
        Err(panic) => Some(format!(
            "panic: {}",
            panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or(panic.downcast_ref::<&str>().copied())
                .unwrap_or("unknown")
        )),
    };
    let mut record = ExperimentRecord {
        experiment: cfg.experiment,
        config_hash: cfg.hash(),
        record_hash: String::new(),
        workers,
        seed: cfg.seed,
        status: Status::Error,
        failure,
        metrics: rec.metrics,
        slopes: rec.slopes,
        samples: rec.samples,
        artifacts: rec.artifacts,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    record.seal();
    record.write(&out.join("record.json"))?;
    Ok(record)
}

pub fn run(
    cfg: &ExperimentConfig,
    out: &Path,
    workers: usize,
) -> Result<ExperimentRecord, CliError> {
    pool(workers)?.install(|| execute(cfg, out, workers))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepItem {
    pub value: f64,
    pub dir: String,
    pub status: Status,
    pub key_metric: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: String,
    pub metric: Option<String>,
    pub items: Vec<SweepItem>,
    /// Log-log slope of the key metric against the axis over items with a positive metric.
    pub aggregate_slope: Option<f64>,
}

/// Runs the config once per value of `axis`, in parallel, and appends an aggregate slope
/// of the key metric. Items fail independently.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: &str,
    values: &[f64],
    out: &Path,
    workers: usize,
) -> Result<(SweepSummary, Vec<ExperimentRecord>), CliError> {
    cfg.check_axis(axis)?;
    let results: Vec<(SweepItem, Option<ExperimentRecord>)> = pool(workers)?.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &value)| {
                let dir = format!("{i:03}-{axis}-{value}");
                let path = out.join(&dir);
                match cfg
                    .with_axis(axis, value)
                    .and_then(|c| execute(&c, &path, workers))
                {
                    Ok(r) => (
                        SweepItem {
                            value,
                            dir,
                            status: r.status,
                            key_metric: r.key_metric().and_then(|m| m.value),
                            failure: r.failure.clone(),
                        },
                        Some(r),
                    ),
                    Err(e) => (
                        SweepItem {
                            value,
                            dir,
                            status: Status::Error,
                            key_metric: None,
                            failure: Some(e.to_string()),
                        },
                        None,
                    ),
                }
            })
            .collect()
    });
    let (items, records): (Vec<SweepItem>, Vec<Option<ExperimentRecord>>) =
        results.into_iter().unzip();
    let records: Vec<ExperimentRecord> = records.into_iter().flatten().collect();
    let fit: Vec<(f64, f64)> = items
        .iter()
        .filter_map(|it| it.key_metric.filter(|m| *m > 0.0).map(|m| (it.value, m)))
        .filter(|(x, _)| *x > 0.0)
        .collect();
    let aggregate_slope = if fit.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        Some(loglog_slope(&xs, &ys)).filter(|s| s.is_finite())
    } else {
        None
    };
    let summary = SweepSummary {
        axis: axis.to_string(),
        metric: records
            .first()
            .and_then(|r| r.key_metric())
            .map(|m| m.name.clone()),
        items,
        aggregate_slope,
    };
    if !values.is_empty() {
        std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
        let text =
            serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(out.join("sweep.json"), text).map_err(|e| io(out, e))?;
    }
    Ok((summary, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub record: String,
    pub experiment: String,
    pub metric: String,
    pub value: Option<f64>,
    pub tolerance: String,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub passed: usize,
    pub failed: usize,
}

fn find_records(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| io(dir, e))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_records(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "record.json") {
            found.push(path);
        }
    }
    Ok(())
}

/// Summarizes every record.json under `dir` into report.md and report.json in `out`,
/// failures first.
pub fn report(dir: &Path, out: &Path) -> Result<Report, CliError> {
    let mut paths = Vec::new();
    find_records(dir, &mut paths)?;
    if paths.is_empty() {
        return Err(CliError::NoRecords(dir.display().to_string()));
    }
    let mut rows = Vec::new();
    for path in &paths {
        let r = ExperimentRecord::read(path)?;
        let name = path
            .parent()
            .and_then(|p| p.strip_prefix(dir).ok())
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let name = if name.is_empty() {
            ".".to_string()
        } else {
            name
        };
        let (metric, value, tolerance) = match r.key_metric() {
            Some(m) => (m.name.clone(), m.value, m.tolerance()),
            None => ("-".into(), None, "-".into()),
        };
        rows.push(ReportRow {
            record: name,
            experiment: r.experiment.name().into(),
            metric,
            value,
            tolerance,
            status: r.status,
        });
    }
    rows.sort_by_key(|row| row.status == Status::Pass);
    let passed = rows.iter().filter(|r| r.status == Status::Pass).count();
    let report = Report {
        failed: rows.len() - passed,
        passed,
        rows,
    };

    let mut md = String::from("| record | experiment | key metric | value | tolerance | status |\n|---|---|---|---|---|---|\n");
    for r in &report.rows {
        let value = r
            .value
            .map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "-".into());
        let status = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        md += &format!(
            "| {} | {} | {} | {value} | {} | {status} |\n",
            r.record, r.experiment, r.metric, r.tolerance
        );
    }
    md += &format!("\n{} passed, {} failed\n", report.passed, report.failed);
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    std::fs::write(out.join("report.md"), md).map_err(|e| io(out, e))?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out.join("report.json"), text).map_err(|e| io(out, e))?;
    Ok(report)
}
