//! Directory of model files keyed by content hash.
//!
//! Layout: every `*.json` model file in the root (sidecars excluded), plus
//! `calibrations/<entry id>.json`. Calibrations for one model are written
//! under that model's lock; reads never block on other models.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use protoforge::uq::{Method, PredictionInterval};
use serde::Serialize;

use crate::error::{AppError, AppResult};
use crate::model::{CalibrationEntry, CalibrationRequest, ModelBundle};

pub struct ModelEntry {
    pub bundle: ModelBundle,
    calibrations: RwLock<BTreeMap<String, Arc<CalibrationEntry>>>,
    write: Mutex<()>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationInfo {
    pub id: String,
    pub method: Method,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub passes: usize,
    pub seed: u64,
}

impl From<&CalibrationEntry> for CalibrationInfo {
    fn from(e: &CalibrationEntry) -> Self {
        Self {
            id: e.id.clone(),
            method: e.request.method,
            alpha: e.request.alpha,
            passes: e.request.passes,
            seed: e.request.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub id: String,
    pub name: String,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelDetail {
    pub id: String,
    pub name: String,
    pub hash: String,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// Observed in the training data, raw units.
    pub feature_ranges: Vec<(f64, f64)>,
    pub target_ranges: Vec<(f64, f64)>,
    pub n_train: Option<usize>,
    pub n_cal: Option<usize>,
    pub cqr_alpha: Option<f64>,
    pub final_loss: Option<f64>,
    pub calibrations: Vec<CalibrationInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scatter {
    pub x: String,
    pub y: String,
    pub points: Vec<(f64, f64)>,
}

enum Axis {
    Feature(usize),
    Target(usize),
}

impl ModelEntry {
    fn new(bundle: ModelBundle) -> Self {
        Self {
            bundle,
            calibrations: RwLock::new(BTreeMap::new()),
            write: Mutex::new(()),
        }
    }

    pub fn id(&self) -> &str {
        self.bundle.id()
    }

    pub fn summary(&self) -> ModelSummary {
        let m = &self.bundle.model;
        ModelSummary {
            id: self.id().to_string(),
            name: self.bundle.name(),
            feature_names: m.feature_names.clone(),
            target_names: m.target_names.clone(),
        }
    }

    pub fn detail(&self) -> ModelDetail {
        let b = &self.bundle;
        let m = &b.model;
        let summary = m.data_summary.as_ref();
        ModelDetail {
            id: self.id().to_string(),
            name: b.name(),
            hash: b.hash.clone(),
            feature_names: m.feature_names.clone(),
            target_names: m.target_names.clone(),
            feature_ranges: summary.map(|s| s.feature_ranges.clone()).unwrap_or_default(),
            target_ranges: summary.map(|s| s.target_ranges.clone()).unwrap_or_default(),
            n_train: summary.map(|s| s.n_rows),
            n_cal: b.cal_data.as_ref().map(|d| d.len()),
            cqr_alpha: b.quantiles.as_ref().map(|q| q.alpha),
            final_loss: m.loss_history.last().copied(),
            calibrations: self.calibrations().iter().map(|e| e.as_ref().into()).collect(),
        }
    }

    pub fn calibrations(&self) -> Vec<Arc<CalibrationEntry>> {
        let map = self.calibrations.read().unwrap_or_else(PoisonError::into_inner);
        map.values().cloned().collect()
    }

    fn lookup(&self, id: &str) -> Option<Arc<CalibrationEntry>> {
        let map = self.calibrations.read().unwrap_or_else(PoisonError::into_inner);
        map.get(id).cloned()
    }

    fn insert(&self, entry: Arc<CalibrationEntry>) {
        let mut map = self.calibrations.write().unwrap_or_else(PoisonError::into_inner);
        map.insert(entry.id.clone(), entry);
    }

    fn axis(&self, name: &str, field: &str) -> AppResult<Axis> {
        let m = &self.bundle.model;
        if let Some(j) = m.feature_names.iter().position(|n| n == name) {
            return Ok(Axis::Feature(j));
        }
        if let Some(j) = m.target_names.iter().position(|n| n == name) {
            return Ok(Axis::Target(j));
        }
        Err(AppError::invalid(field, format!("`{name}` is neither a feature nor a target")))
    }

    /// Stored training rows on two axes. Feature axes use the observed
    /// values; target axes use the model's prediction at that row.
    pub fn scatter(&self, x: &str, y: &str) -> AppResult<Scatter> {
        let (ax, ay) = (self.axis(x, "x")?, self.axis(y, "y")?);
        let model = &self.bundle.model;
        let rows = model
            .data_summary
            .as_ref()
            .map(|s| s.sample_x.as_slice())
            .unwrap_or_default();
        let needs_prediction = matches!(ax, Axis::Target(_)) || matches!(ay, Axis::Target(_));
        let mut points = Vec::with_capacity(rows.len());
        for row in rows {
            let pred = if needs_prediction { model.predict(row)? } else { Vec::new() };
            let value = |a: &Axis| match *a {
                Axis::Feature(j) => row[j],
                Axis::Target(j) => pred[j],
            };
            points.push((value(&ax), value(&ay)));
        }
        Ok(Scatter {
            x: x.to_string(),
            y: y.to_string(),
            points,
        })
    }
}

pub struct Registry {
    dir: PathBuf,
    models: BTreeMap<String, Arc<ModelEntry>>,
    /// Entries whose model is not in the registry, kept so that using them
    /// reports a hash mismatch rather than an unknown id.
    orphans: HashMap<String, Arc<CalibrationEntry>>,
}

impl Registry {
    /// Scans `dir`, creating it when missing. Files that fail to parse as
    /// models are skipped with a message on stderr.
    pub fn open(dir: impl AsRef<Path>) -> AppResult<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
        let mut models = BTreeMap::new();
        for path in json_files(&dir)? {
            let name = path.file_name().unwrap_or_default().to_string_lossy();
            if name.ends_with(".cqr.json") {
                continue;
            }
            match ModelBundle::load(&path) {
                Ok(b) => {
                    models.insert(b.id().to_string(), Arc::new(ModelEntry::new(b)));
                }
                Err(e) => eprintln!("skipping {}: {e}", path.display()),
            }
        }
        let mut orphans = HashMap::new();
        let cal_dir = dir.join("calibrations");
        if cal_dir.is_dir() {
            for path in json_files(&cal_dir)? {
                let entry = match CalibrationEntry::load(&path) {
                    Ok(e) => Arc::new(e),
                    Err(e) => {
                        eprintln!("skipping {}: {e}", path.display());
                        continue;
                    }
                };
                match models.values().find(|m: &&Arc<ModelEntry>| m.bundle.hash == entry.model_hash) {
                    Some(m) => m.insert(entry),
                    None => {
                        orphans.insert(entry.id.clone(), entry);
                    }
                }
            }
        }
        Ok(Self { dir, models, orphans })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn models(&self) -> impl Iterator<Item = &Arc<ModelEntry>> {
        self.models.values()
    }

    pub fn model(&self, id: &str) -> AppResult<Arc<ModelEntry>> {
        self.models
            .get(id)
            .cloned()
            .ok_or_else(|| AppError::NotFound(format!("model {id}")))
    }

    fn find_anywhere(&self, id: &str) -> Option<Arc<CalibrationEntry>> {
        self.models
            .values()
            .find_map(|m| m.lookup(id))
            .or_else(|| self.orphans.get(id).cloned())
    }

    /// Returns the existing entry for an identical request, or fits and
    /// persists a new one. The flag is true when the entry was created.
    pub fn calibrate(&self, model: &ModelEntry, req: &CalibrationRequest) -> AppResult<(Arc<CalibrationEntry>, bool)> {
        req.validate()?;
        let id = CalibrationEntry::entry_id(&model.bundle.hash, req);
        if let Some(e) = model.lookup(&id) {
            return Ok((e, false));
        }
        let _guard = model.write.lock().unwrap_or_else(PoisonError::into_inner);
        if let Some(e) = model.lookup(&id) {
            return Ok((e, false));
        }
        let entry = model.bundle.calibrate(req)?;
        let cal_dir = self.dir.join("calibrations");
        std::fs::create_dir_all(&cal_dir).map_err(|e| AppError::io(&cal_dir, e))?;
        entry.save(cal_dir.join(format!("{}.json", entry.id)))?;
        let entry = Arc::new(entry);
        model.insert(entry.clone());
        Ok((entry, true))
    }

    /// Picks the calibration for a request: an explicit entry id, or the
    /// default-settings entry for `(method, alpha)`.
    pub fn resolve(
        &self,
        model: &ModelEntry,
        calibration: Option<&str>,
        method: Method,
        alpha: f64,
    ) -> AppResult<Arc<CalibrationEntry>> {
        match calibration {
            Some(id) => match model.lookup(id) {
                Some(e) => Ok(e),
                None => {
                    let e = self
                        .find_anywhere(id)
                        .ok_or_else(|| AppError::NotFound(format!("calibration {id}")))?;
                    model.bundle.check(&e)?;
                    Ok(e)
                }
            },
            None => Ok(self.calibrate(model, &CalibrationRequest::new(method, alpha))?.0),
        }
    }

    pub fn predict(
        &self,
        model: &ModelEntry,
        x: &[f64],
        entry: &CalibrationEntry,
    ) -> AppResult<(Vec<f64>, Vec<PredictionInterval>)> {
        model.bundle.predict(x, Some(entry))
    }
}

fn json_files(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| AppError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}
