//! Long-format metric tables and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::PolicyKind;
use crate::simkit::{MonteCarloLog, ScenarioSpec};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

pub const PD_TABLE: &str = "pd_over_pulses";
pub const SUMRATE_TABLE: &str = "sumrate_over_pulses";
pub const SWEEP_TABLE: &str = "sumrate_vs_snr";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdRow {
    pub pulse: usize,
    pub target_id: usize,
    pub policy: PolicyKind,
    pub rho: f64,
    pub p_detect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRateRow {
    pub pulse: usize,
    pub policy: PolicyKind,
    pub rho: f64,
    pub sum_rate: f64,
    pub normalized_sum_rate: f64,
    pub mean_detections: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: PolicyKind,
    pub rho: f64,
    pub snr_db: f64,
    pub sum_rate: f64,
    pub normalized_sum_rate: f64,
}

/// Rows for every pulse at which a target is scheduled.
pub fn pd_rows(log: &MonteCarloLog) -> Vec<PdRow> {
    let mut rows = Vec::new();
    for (i, row) in log.p_detect.iter().enumerate() {
        for (t, p) in row.iter().enumerate() {
            if let Some(p) = p {
                rows.push(PdRow {
                    pulse: i + 1,
                    target_id: log.target_ids[t],
                    policy: log.policy,
                    rho: log.rho,
                    p_detect: *p,
                });
            }
        }
    }
    rows
}

pub fn sumrate_rows(log: &MonteCarloLog) -> Vec<SumRateRow> {
    (0..log.pulses())
        .map(|i| SumRateRow {
            pulse: i + 1,
            policy: log.policy,
            rho: log.rho,
            sum_rate: log.mean_sum_rate[i],
            normalized_sum_rate: log.mean_normalized_sum_rate[i],
            mean_detections: log.mean_count[i],
        })
        .collect()
}

/// Steady-state point: mean over the last `min(10, P)` pulses.
pub fn sweep_row(log: &MonteCarloLog, snr_db: f64) -> SweepRow {
    let p = log.pulses();
    let first = p.saturating_sub(10);
    let n = (p - first) as f64;
    SweepRow {
        policy: log.policy,
        rho: log.rho,
        snr_db,
        sum_rate: log.mean_sum_rate[first..].iter().sum::<f64>() / n,
        normalized_sum_rate: log.mean_normalized_sum_rate[first..].iter().sum::<f64>() / n,
    }
}

/// Writes `dir/<stem>.<ext>` and returns its path.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T], format: OutputFormat) -> Result<PathBuf, ReportError> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let file = File::create(&path).map_err(io_err(&path))?;
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            for r in rows {
                w.serialize(r).map_err(|e| fmt_err(&path, e))?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        OutputFormat::Json => {
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, rows).map_err(|e| fmt_err(&path, e))?;
            writeln!(w).map_err(io_err(&path))?;
            w.flush().map_err(io_err(&path))?;
        }
    }
    Ok(path)
}

pub fn read_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReportError> {
    let file = File::open(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| fmt_err(path, e))
    } else {
        csv::Reader::from_reader(file)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| fmt_err(path, e))
    }
}

/// Which command produced a set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RunPlan {
    Run,
    Compare { policies: Vec<PolicyKind> },
    Sweep { rho: Vec<f64>, snr_db: Vec<f64> },
}

/// Everything needed to reproduce a set of output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool_version: String,
    /// Name or file the scenario was loaded from.
    pub source: String,
    pub format: OutputFormat,
    pub plan: RunPlan,
    pub scenario: ScenarioSpec,
    pub outputs: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, ReportError> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| fmt_err(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| fmt_err(path, e))
}
