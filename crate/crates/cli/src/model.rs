//! A model file on disk plus its optional sidecars, and calibration entries
//! tied to the file's content hash.
//!
//! For `m.json` the sidecars are `m.cal.csv` (held-out calibration rows) and
//! `m.cqr.json` (quantile heads for CQR).

use std::path::{Path, PathBuf};

use protoforge::datakit::{ingest_csv, Dataset, TrainedSurrogate};
use protoforge::uq::{
    confmc_calibrate, cqr_calibrate, splitcp_calibrate, Calibration, McSettings, Method,
    PredictionInterval, QuantileRegressor, DEFAULT_PASSES,
};
use protoforge::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn calibration_data_path(model: &Path) -> PathBuf {
    model.with_extension("cal.csv")
}

pub fn quantiles_path(model: &Path) -> PathBuf {
    model.with_extension("cqr.json")
}

/// What to calibrate. Identical requests against the same model file yield
/// the same entry id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRequest {
    pub method: Method,
    pub alpha: f64,
    #[serde(rename = "K", default = "default_passes")]
    pub passes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_passes() -> usize {
    DEFAULT_PASSES
}

impl CalibrationRequest {
    pub fn new(method: Method, alpha: f64) -> Self {
        Self {
            method,
            alpha,
            passes: DEFAULT_PASSES,
            seed: 0,
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AppError::invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.passes < 2 {
            return Err(AppError::invalid("K", "need at least 2 MC passes"));
        }
        Ok(())
    }
}

/// A fitted calibration and the model file it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub id: String,
    pub model_hash: String,
    pub request: CalibrationRequest,
    pub calibration: Calibration,
}

impl CalibrationEntry {
    pub fn entry_id(model_hash: &str, req: &CalibrationRequest) -> String {
        let key = serde_json::to_string(&(model_hash, req)).expect("request serializes");
        sha256_hex(key.as_bytes())[..16].to_string()
    }

    pub fn load(path: impl AsRef<Path>) -> AppResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Ok(serde_json::from_str(&text).map_err(Error::from)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> AppResult<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(Error::from)?;
        std::fs::write(path, text).map_err(|e| AppError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub path: PathBuf,
    /// SHA-256 of the model file, hex.
    pub hash: String,
    pub model: TrainedSurrogate,
    pub quantiles: Option<QuantileRegressor>,
    pub cal_data: Option<Dataset>,
}

impl ModelBundle {
    /// Loads the model and whichever sidecars exist.
    pub fn load(path: impl AsRef<Path>) -> AppResult<Self> {
        let path = path.as_ref().to_path_buf();
        let bytes = std::fs::read(&path).map_err(|e| AppError::io(&path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Data(format!("{} is not UTF-8", path.display())))?;
        let model = TrainedSurrogate::from_json(text)?;
        let qpath = quantiles_path(&path);
        let quantiles = if qpath.exists() {
            let text = std::fs::read_to_string(&qpath).map_err(|e| AppError::io(&qpath, e))?;
            Some(serde_json::from_str(&text).map_err(Error::from)?)
        } else {
            None
        };
        let cpath = calibration_data_path(&path);
        let cal_data = if cpath.exists() {
            Some(read_rows(&cpath, &model)?)
        } else {
            None
        };
        Ok(Self {
            hash: sha256_hex(&bytes),
            path,
            model,
            quantiles,
            cal_data,
        })
    }

    /// Short registry id: the first 16 hex digits of the hash.
    pub fn id(&self) -> &str {
        &self.hash[..16]
    }

    pub fn name(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    /// Fits against the sidecar calibration rows.
    pub fn calibrate(&self, req: &CalibrationRequest) -> AppResult<CalibrationEntry> {
        let needs_rows = req.method != Method::Mc;
        match (&self.cal_data, needs_rows) {
            (Some(cal), _) => self.calibrate_on(req, cal),
            (None, false) => self.calibrate_on(req, &empty_rows(&self.model)),
            (None, true) => Err(Error::Calibration(format!(
                "no calibration rows at {}; train with --holdout or pass --data",
                calibration_data_path(&self.path).display()
            ))
            .into()),
        }
    }

    pub fn calibrate_on(&self, req: &CalibrationRequest, cal: &Dataset) -> AppResult<CalibrationEntry> {
        req.validate()?;
        let calibration = match req.method {
            Method::Mc => Calibration::Mc(McSettings {
                alpha: req.alpha,
                passes: req.passes,
                seed: req.seed,
            }),
            Method::Confmc => {
                let mut c = confmc_calibrate(&self.model, cal, req.alpha, req.passes, req.seed)?;
                c.scores.clear();
                Calibration::Confmc(c)
            }
            Method::Cp => Calibration::Cp(splitcp_calibrate(&self.model, cal, req.alpha)?),
            Method::Cqr => {
                let q = self.quantiles.as_ref().ok_or_else(|| {
                    Error::Calibration(format!(
                        "no quantile heads at {}; train with --cqr-alpha",
                        quantiles_path(&self.path).display()
                    ))
                })?;
                if (q.alpha - req.alpha).abs() > 1e-12 {
                    return Err(AppError::invalid(
                        "alpha",
                        format!("the quantile heads were trained for alpha {}; retrain them to change it", q.alpha),
                    ));
                }
                Calibration::Cqr(cqr_calibrate(&q.lo, &q.hi, cal, req.alpha)?)
            }
        };
        Ok(CalibrationEntry {
            id: CalibrationEntry::entry_id(&self.hash, req),
            model_hash: self.hash.clone(),
            request: *req,
            calibration,
        })
    }

    /// Refuses entries fitted against a different model file.
    pub fn check(&self, entry: &CalibrationEntry) -> AppResult<()> {
        if entry.model_hash != self.hash {
            return Err(AppError::HashMismatch {
                calibration: entry.id.clone(),
                expected: entry.model_hash.clone(),
                actual: self.hash.clone(),
            });
        }
        Ok(())
    }

    /// Deterministic prediction and one interval per head, all raw units.
    pub fn predict(
        &self,
        x: &[f64],
        entry: Option<&CalibrationEntry>,
    ) -> AppResult<(Vec<f64>, Vec<PredictionInterval>)> {
        if x.len() != self.model.input_dim() {
            return Err(AppError::invalid(
                "x",
                format!("expected {} features, got {}", self.model.input_dim(), x.len()),
            ));
        }
        let point = self.model.predict(x)?;
        let intervals = match entry {
            Some(e) => {
                self.check(e)?;
                e.calibration.raw_intervals(x, &self.model, self.quantiles.as_ref())?
            }
            None => Vec::new(),
        };
        Ok((point, intervals))
    }
}

/// Reads calibration rows using the model's column names.
pub fn read_rows(path: &Path, model: &TrainedSurrogate) -> AppResult<Dataset> {
    let targets: Vec<&str> = model.target_names.iter().map(String::as_str).collect();
    let ds = ingest_csv(path, &targets)?.dataset;
    if ds.feature_names != model.feature_names {
        return Err(Error::Data(format!(
            "{}: feature columns {:?} do not match the model's {:?}",
            path.display(),
            ds.feature_names,
            model.feature_names
        ))
        .into());
    }
    Ok(ds)
}

/// Writes rows as CSV with features first, then targets.
pub fn write_rows(path: &Path, ds: &Dataset) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    let header = ds.feature_names.iter().chain(&ds.target_names);
    w.write_record(header).map_err(Error::from)?;
    for (x, y) in ds.x.iter().zip(&ds.y) {
        w.write_record(x.iter().chain(y).map(|v| v.to_string()))
            .map_err(Error::from)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn empty_rows(model: &TrainedSurrogate) -> Dataset {
    Dataset {
        feature_names: model.feature_names.clone(),
        target_names: model.target_names.clone(),
        x: Vec::new(),
        y: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_paths() {
        let p = Path::new("dir/m.json");
        assert_eq!(calibration_data_path(p), Path::new("dir/m.cal.csv"));
        assert_eq!(quantiles_path(p), Path::new("dir/m.cqr.json"));
    }

    #[test]
    fn entry_ids_depend_on_every_request_field() {
        let base = CalibrationRequest::new(Method::Confmc, 0.2);
        let id = CalibrationEntry::entry_id("abc", &base);
        assert_eq!(id, CalibrationEntry::entry_id("abc", &base));
        assert_eq!(id.len(), 16);
        let variants = [
            CalibrationRequest { method: Method::Cp, ..base },
            CalibrationRequest { alpha: 0.1, ..base },
            CalibrationRequest { passes: 100, ..base },
            CalibrationRequest { seed: 1, ..base },
        ];
        for v in variants {
            assert_ne!(id, CalibrationEntry::entry_id("abc", &v));
        }
        assert_ne!(id, CalibrationEntry::entry_id("abd", &base));
    }

    #[test]
    fn request_defaults_and_validation() {
        let r: CalibrationRequest = serde_json::from_str(r#"{"method":"mc","alpha":0.3}"#).unwrap();
        assert_eq!(r.passes, DEFAULT_PASSES);
        assert_eq!(r.seed, 0);
        assert!(serde_json::from_str::<CalibrationRequest>(r#"{"method":"mc","alpha":0.3,"x":1}"#).is_err());
        for alpha in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(CalibrationRequest::new(Method::Cp, alpha).validate().is_err());
        }
        let few = CalibrationRequest { passes: 1, ..r };
        assert!(few.validate().is_err());
    }
}
