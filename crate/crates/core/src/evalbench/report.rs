use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{aec, aiw, conditional_bins, BinSummary};
use super::{BenchConfig, TrialRecord};
use crate::error::{Error, Result};
use crate::uq::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub aec: f64,
    pub aec_std: f64,
    pub aiw: f64,
    pub aiw_std: f64,
    pub bins: Vec<BinSummary>,
    pub trials: Vec<TrialSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub methods: Vec<MethodSummary>,
}

impl BenchReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Ordered fold over trials; the input order does not matter.
pub fn summarize(cfg: &BenchConfig, records: &[TrialRecord]) -> Result<BenchReport> {
    let mut records = records.to_vec();
    records.sort_by_key(|r| r.trial);
    let methods = cfg
        .methods
        .iter()
        .map(|&m| {
            let (aec_mean, aec_std) = aec(&records, m)?;
            let (aiw_mean, aiw_std) = aiw(&records, m)?;
            let trials = records
                .iter()
                .map(|r| {
                    let one = std::slice::from_ref(r);
                    Ok(TrialSummary {
                        trial: r.trial,
                        coverage: aec(one, m)?.0,
                        mean_width: aiw(one, m)?.0,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(MethodSummary {
                method: m,
                aec: aec_mean,
                aec_std,
                aiw: aiw_mean,
                aiw_std,
                bins: conditional_bins(&records, m, cfg.n_bins)?,
                trials,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BenchReport {
        config: cfg.clone(),
        methods,
    })
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub summary_csv: PathBuf,
    pub bins_csv: PathBuf,
}

/// Writes `report.json`, `summary.csv` (one row per method) and `bins.csv`
/// into `dir`, creating it if needed.
pub fn emit_report(report: &BenchReport, dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        json: dir.join("report.json"),
        summary_csv: dir.join("summary.csv"),
        bins_csv: dir.join("bins.csv"),
    };
    let json = serde_json::to_string_pretty(report)?;
    fs::write(&files.json, json).map_err(|e| Error::io(&files.json, e))?;

    let mut w = csv::Writer::from_path(&files.summary_csv)?;
    w.write_record(["method", "AEC", "AEC_std", "AIW", "AIW_std"])?;
    for s in &report.methods {
        w.write_record([
            s.method.to_string(),
            s.aec.to_string(),
            s.aec_std.to_string(),
            s.aiw.to_string(),
            s.aiw_std.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&files.summary_csv, e))?;

    let mut w = csv::Writer::from_path(&files.bins_csv)?;
    w.write_record(["method", "bin", "y_lo", "y_hi", "coverage", "mean_width"])?;
    for s in &report.methods {
        for b in &s.bins {
            w.write_record([
                s.method.to_string(),
                b.bin.to_string(),
                b.y_lo.to_string(),
                b.y_hi.to_string(),
                b.coverage.to_string(),
                b.mean_width.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&files.bins_csv, e))?;
    Ok(files)
}

impl BenchReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
