//! Repeated draw / split / train / calibrate / test trials.
//!
//! Every trial `b` derives all of its randomness from `(master_seed, b)`, so
//! trials run concurrently and in any order without changing the result.

mod metrics;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{aec, aiw, binned, conditional_bins, BinKey, BinSummary};
pub use report::{emit_report, summarize, BenchReport, MethodSummary, ReportFiles, TrialSummary};

use crate::datakit::{
    draw_and_split, ingest_csv, synthetic::Generator, train, Dataset, SplitPlan, TrainConfig,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::uq::{
    confmc_calibrate, confmc_interval_from_samples, cqr_calibrate, cqr_interval,
    mc_predict_standardized, splitcp_calibrate, splitcp_interval, train_quantile_regressor,
    Calibration, McSettings, Method, PredictionInterval, DEFAULT_PASSES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchDataset {
    /// CSV file; relative paths resolve against the config file's directory
    /// when loaded with [`BenchConfig::load`].
    Csv { path: PathBuf, targets: Vec<String> },
    Synthetic(Generator),
}

impl BenchDataset {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            BenchDataset::Csv { path, targets } => {
                let t: Vec<&str> = targets.iter().map(String::as_str).collect();
                Ok(ingest_csv(path, &t)?.dataset)
            }
            BenchDataset::Synthetic(g) => Ok(g.generate()),
        }
    }

    fn generator(&self) -> Option<&Generator> {
        match self {
            BenchDataset::Synthetic(g) => Some(g),
            BenchDataset::Csv { .. } => None,
        }
    }
}

/// Sizes of the per-trial draw; the draw seed comes from the trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub n_total: usize,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
}

impl Default for BenchPlan {
    fn default() -> Self {
        let p = SplitPlan::benchmark(0);
        Self {
            n_total: p.n_total,
            n_train: p.n_train,
            n_cal: p.n_cal,
            n_test: p.n_test,
        }
    }
}

impl BenchPlan {
    pub fn with_seed(&self, seed: u64) -> SplitPlan {
        SplitPlan {
            seed,
            n_total: self.n_total,
            n_train: self.n_train,
            n_cal: self.n_cal,
            n_test: self.n_test,
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_trials() -> usize {
    20
}
fn default_alpha() -> f64 {
    0.2
}
fn default_passes() -> usize {
    DEFAULT_PASSES
}
fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: BenchDataset,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(rename = "B", alias = "trials", default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub plan: BenchPlan,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Architecture and optimizer; `seed` and `loss` are overridden per trial.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(rename = "K", alias = "passes", default = "default_passes")]
    pub passes: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
}

impl BenchConfig {
    pub fn new(dataset: BenchDataset) -> Self {
        Self {
            dataset,
            methods: default_methods(),
            trials: default_trials(),
            plan: BenchPlan::default(),
            alpha: default_alpha(),
            train: TrainConfig::default(),
            passes: default_passes(),
            master_seed: 0,
            n_bins: default_bins(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::field("B", "need at least one trial"));
        }
        if self.methods.is_empty() {
            return Err(Error::field("methods", "need at least one method"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::field("alpha", "must lie in (0, 1)"));
        }
        if self.passes < 2 {
            return Err(Error::field("K", "need at least 2 passes"));
        }
        if self.n_bins == 0 {
            return Err(Error::field("n_bins", "need at least one bin"));
        }
        self.plan.with_seed(0).validate()?;
        if self.plan.n_train < 2 || self.plan.n_cal == 0 || self.plan.n_test == 0 {
            return Err(Error::field(
                "plan",
                "need >= 2 training rows and non-empty calibration and test parts",
            ));
        }
        self.train.validate()
    }

    /// Reads a JSON config; a relative CSV path is taken relative to the
    /// config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let BenchDataset::Csv { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub y_true: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
    pub width: f64,
}

impl PointRecord {
    pub fn new(y_true: f64, iv: &PredictionInterval) -> Self {
        Self::with_width(y_true, iv, iv.width())
    }

    /// For methods whose width is known in closed form; `upper - lower`
    /// can be off by an ulp.
    pub fn with_width(y_true: f64, iv: &PredictionInterval, width: f64) -> Self {
        Self {
            y_true,
            lower: iv.lower,
            upper: iv.upper,
            covered: iv.contains(y_true),
            width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecords {
    pub method: Method,
    /// Fitted state, without per-point diagnostics.
    pub calibration: Calibration,
    pub points: Vec<PointRecord>,
}

/// Everything measured in one trial, on the standardized target scale of
/// that trial's surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub methods: Vec<MethodRecords>,
    /// Generator noise level at each test point (synthetic data only), in
    /// standardized target units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
    pub final_train_loss: f64,
}

impl TrialRecord {
    pub fn method(&self, m: Method) -> Option<&MethodRecords> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Seeds of one trial, all derived from the master seed and the trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub trial: u64,
    pub split: u64,
    pub train: u64,
    pub mc: u64,
}

impl TrialSeeds {
    pub fn new(master: u64, b: usize) -> Self {
        let trial = seed::derive(master, &[seed::TAG_TRIAL, b as u64]);
        Self {
            trial,
            split: seed::derive(trial, &[0]),
            train: seed::derive(trial, &[1]),
            mc: seed::derive(trial, &[2]),
        }
    }
}

/// One full trial on an already loaded dataset. Only single-target data is
/// supported.
pub fn run_trial(cfg: &BenchConfig, data: &Dataset, b: usize) -> Result<TrialRecord> {
    run_trial_inner(cfg, data, b).map_err(|e| Error::Trial {
        trial: b,
        source: Box::new(e),
    })
}

fn run_trial_inner(cfg: &BenchConfig, data: &Dataset, b: usize) -> Result<TrialRecord> {
    if data.n_targets() != 1 {
        return Err(Error::Config(format!(
            "the benchmark needs exactly one target, got {}",
            data.n_targets()
        )));
    }
    let seeds = TrialSeeds::new(cfg.master_seed, b);
    let splits = draw_and_split(data, &cfg.plan.with_seed(seeds.split))?;
    let mut tc = cfg.train.clone();
    tc.seed = seeds.train;
    tc.loss = crate::netcore::Loss::Mse;
    let model = train(&splits.train, &tc)?;
    let st = &model.standardizer;
    let y_test: Vec<f64> = splits
        .test
        .y
        .iter()
        .map(|y| st.transform_target(0, y[0]))
        .collect();
    let mut methods = Vec::new();

    let wants_mc = cfg.has(Method::Mc) || cfg.has(Method::Confmc);
    let samples = if wants_mc {
        splits
            .test
            .x
            .par_iter()
            .map(|x| {
                let s = mc_predict_standardized(&st.transform_x(x), &model, cfg.passes, seeds.mc)?;
                Ok(s.into_iter().next().expect("one head"))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    for &m in &cfg.methods {
        let mut exact_width = None;
        let (calibration, intervals): (Calibration, Vec<PredictionInterval>) = match m {
            Method::Mc => {
                let c = McSettings {
                    alpha: cfg.alpha,
                    passes: cfg.passes,
                    seed: seeds.mc,
                };
                let iv = samples
                    .iter()
                    .map(|s| {
                        let (lower, upper) = s.nested_interval(cfg.alpha);
                        PredictionInterval {
                            lower,
                            upper,
                            method: Method::Mc,
                            alpha: cfg.alpha,
                        }
                    })
                    .collect();
                (Calibration::Mc(c), iv)
            }
            Method::Confmc => {
                let mut c = confmc_calibrate(&model, &splits.cal, cfg.alpha, cfg.passes, seeds.mc)?;
                let t = c.t_hat[0];
                let iv = samples
                    .iter()
                    .map(|s| confmc_interval_from_samples(s, t, cfg.alpha))
                    .collect();
                c.scores.clear();
                (Calibration::Confmc(c), iv)
            }
            Method::Cp => {
                let c = splitcp_calibrate(&model, &splits.cal, cfg.alpha)?;
                let iv = splits
                    .test
                    .x
                    .iter()
                    .map(|x| Ok(splitcp_interval(x, &model, &c)?[0]))
                    .collect::<Result<_>>()?;
                exact_width = Some(2.0 * c.q_hat[0]);
                (Calibration::Cp(c), iv)
            }
            Method::Cqr => {
                let q = train_quantile_regressor(&splits.train, &tc, cfg.alpha)?;
                let c = cqr_calibrate(&q.lo, &q.hi, &splits.cal, cfg.alpha)?;
                // heads share the training split, hence the standardizer
                let iv = splits
                    .test
                    .x
                    .iter()
                    .map(|x| Ok(cqr_interval(x, &q.lo, &q.hi, &c)?[0]))
                    .collect::<Result<_>>()?;
                (Calibration::Cqr(c), iv)
            }
        };
        let points = y_test
            .iter()
            .zip(&intervals)
            .map(|(&y, iv)| match exact_width {
                Some(w) => PointRecord::with_width(y, iv, w),
                None => PointRecord::new(y, iv),
            })
            .collect();
        methods.push(MethodRecords {
            method: m,
            calibration,
            points,
        });
    }

    let noise = cfg.dataset.generator().map(|g| {
        splits
            .test
            .x
            .iter()
            .map(|x| g.noise_level(x) / st.y_std[0])
            .collect()
    });
    Ok(TrialRecord {
        trial: b,
        seed: seeds.trial,
        methods,
        noise,
        final_train_loss: model.loss_history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Runs the given trial indices in parallel; the output is ordered by trial
/// index whatever order `trials` lists them in.
pub fn run_trials(cfg: &BenchConfig, data: &Dataset, trials: &[usize]) -> Result<Vec<TrialRecord>> {
    let mut records = trials
        .par_iter()
        .map(|&b| run_trial(cfg, data, b))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.trial);
    Ok(records)
}

/// Loads the dataset, runs all `B` trials and summarizes them.
pub fn run_bench(cfg: &BenchConfig) -> Result<(BenchReport, Vec<TrialRecord>)> {
    cfg.validate()?;
    let data = cfg.dataset.load()?;
    let trials: Vec<usize> = (0..cfg.trials).collect();
    let records = run_trials(cfg, &data, &trials)?;
    Ok((summarize(cfg, &records)?, records))
}
