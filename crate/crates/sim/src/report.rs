//! CSV and JSON report files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::experiment::SimReport;
use crate::stats::{Percentiles, StageLatencyPercentiles};
use crate::throughput::ThroughputRow;
use crate::ttl::TtlSweepRow;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A type with a flat CSV rendering. Nested fields use dotted names.
pub trait CsvRow {
    fn header() -> Vec<String>;
    fn fields(&self) -> Vec<String>;
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

const STAGES: [&str; 4] = ["signature", "context", "registry", "total"];

fn stage_header(prefix: &str) -> Vec<String> {
    STAGES
        .iter()
        .flat_map(|s| ["p50", "p90", "p99"].map(|p| format!("{prefix}.{s}.{p}")))
        .collect()
}

fn stage_fields(p: Option<&StageLatencyPercentiles>) -> Vec<String> {
    let stages: [Option<&Percentiles>; 4] = match p {
        Some(p) => [Some(&p.signature), Some(&p.context), Some(&p.registry), Some(&p.total)],
        None => [None; 4],
    };
    stages
        .iter()
        .flat_map(|s| [s.map(|s| s.p50), s.map(|s| s.p90), s.map(|s| s.p99)].map(opt))
        .collect()
}

impl CsvRow for SimReport {
    fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "scenario",
            "mode",
            "attacks_launched",
            "attacks_intercepted",
            "interception_rate",
            "legit_sent",
            "legit_accepted",
            "false_positive_rate",
        ]
        .map(String::from)
        .to_vec();
        h.extend(stage_header("stage_latency_percentiles"));
        h.extend(
            ["live_count", "peak_count", "evicted_total", "bytes_estimate"].map(|f| format!("registry_stats.{f}")),
        );
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.scenario.clone(),
            self.mode.as_str().to_owned(),
            self.attacks_launched.to_string(),
            self.attacks_intercepted.to_string(),
            opt(self.interception_rate),
            self.legit_sent.to_string(),
            self.legit_accepted.to_string(),
            opt(self.false_positive_rate),
        ];
        f.extend(stage_fields(self.stage_latency_percentiles.as_ref()));
        let r = &self.registry_stats;
        f.extend([r.live_count, r.peak_count, r.evicted_total, r.bytes_estimate].map(|v| v.to_string()));
        f
    }
}

impl CsvRow for TtlSweepRow {
    fn header() -> Vec<String> {
        [
            "window_secs",
            "rate",
            "duration_secs",
            "requests",
            "legit_accepted",
            "peak_entries",
            "expected_entries",
            "bytes_estimate",
        ]
        .map(String::from)
        .to_vec()
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.window_secs.to_string(),
            self.rate.to_string(),
            self.duration_secs.to_string(),
            self.requests.to_string(),
            self.legit_accepted.to_string(),
            self.peak_entries.to_string(),
            self.expected_entries.to_string(),
            self.bytes_estimate.to_string(),
        ]
    }
}

impl CsvRow for ThroughputRow {
    fn header() -> Vec<String> {
        let mut h: Vec<String> = ["offered_rps", "requests", "accepted", "achieved_rps", "capacity_rps"]
            .map(String::from)
            .to_vec();
        h.extend(stage_header("stage_latency_percentiles"));
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.offered_rps.to_string(),
            self.requests.to_string(),
            self.accepted.to_string(),
            self.achieved_rps.to_string(),
            self.capacity_rps.to_string(),
        ];
        f.extend(stage_fields(Some(&self.stage_latency_percentiles)));
        f
    }
}

/// `<out>/<experiment>_<name>.csv` and `.json`.
pub fn report_paths(out: &Path, experiment: &str, name: &str) -> (PathBuf, PathBuf) {
    let stem = format!("{experiment}_{name}");
    (out.join(format!("{stem}.csv")), out.join(format!("{stem}.json")))
}

pub fn write_csv<R: CsvRow>(path: &Path, rows: &[R]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(R::header())?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    write_file(path, &bytes)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    fs::write(path, bytes).map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes `rows` as both CSV and JSON; returns the two paths.
pub fn write_report<R: CsvRow + Serialize>(
    out: &Path,
    experiment: &str,
    name: &str,
    rows: &[R],
) -> Result<(PathBuf, PathBuf), ReportError> {
    let (csv_path, json_path) = report_paths(out, experiment, name);
    write_csv(&csv_path, rows)?;
    write_json(&json_path, rows)?;
    Ok((csv_path, json_path))
}
