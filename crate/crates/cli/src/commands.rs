//! Subcommands. Each returns the JSON document printed on stdout; human
//! notes go to stderr.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use protoforge::datakit::{draw_and_split, ingest_csv, train, SplitPlan, TrainConfig};
use protoforge::evalbench::{emit_report, run_bench, BenchConfig};
use protoforge::pgdsearch::{multi_start_search, RawScale, SearchRequest};
use protoforge::uq::{train_quantile_regressor, Method};
use protoforge::Error;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::error::{AppError, AppResult};
use crate::model::{
    calibration_data_path, quantiles_path, read_rows, write_rows, CalibrationEntry,
    CalibrationRequest, ModelBundle,
};
use crate::registry::Registry;
use crate::service::{self, AppState, DEFAULT_ALPHA};

/// Rows kept in the model file for scatter plots.
const SUMMARY_ROWS: usize = 500;

#[derive(Debug, Parser)]
#[command(name = "protoforge", version, about = "Surrogate training, calibrated intervals and prototype search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a surrogate on a CSV file.
    Train(TrainArgs),
    /// Fit an interval calibration for a trained model.
    Calibrate(CalibrateArgs),
    /// Point prediction and intervals at one feature vector.
    Predict(PredictArgs),
    /// Run a box-constrained input search.
    Search(SearchArgs),
    /// Repeated-trial coverage benchmark.
    Bench(BenchArgs),
    /// Serve the HTTP API over a model directory.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target column names, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training config JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of rows held out as calibration data (`<out>.cal.csv`).
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Also train CQR quantile heads for this alpha (`<out>.cqr.json`).
    #[arg(long)]
    pub cqr_alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Calibration CSV; defaults to the model's `.cal.csv` sidecar.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "confmc")]
    pub method: Method,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// MC dropout passes.
    #[arg(long = "passes", short = 'K', default_value_t = protoforge::uq::DEFAULT_PASSES)]
    pub passes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to `calibrations/<id>.json` next to the model.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntervalArgs {
    /// Calibration file from `calibrate`.
    #[arg(long, conflicts_with_all = ["method", "alpha"])]
    pub calibration: Option<PathBuf>,
    /// Fit this method on the fly from the model's calibration rows.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Raw feature values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x: Vec<f64>,
    #[command(flatten)]
    pub intervals: IntervalArgs,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Search request JSON in raw units.
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub intervals: IntervalArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Parent of the timestamped run directory.
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PROTOFORGE_HOME", default_value = "models")]
    pub model_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Concurrent search jobs; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

pub fn run(cli: Cli) -> AppResult<Value> {
    match cli.command {
        Command::Train(a) => train_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Search(a) => search_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        AppError::invalid(
            e.path().to_string(),
            format!("{}: {}", path.display(), e.into_inner()),
        )
    })
}

fn train_cmd(a: TrainArgs) -> AppResult<Value> {
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(AppError::invalid("holdout", "must lie in [0, 1)"));
    }
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let targets: Vec<&str> = a.targets.iter().map(String::as_str).collect();
    let ingest = ingest_csv(&a.data, &targets)?;
    if ingest.dropped > 0 {
        eprintln!("dropped {} rows with missing or non-numeric cells", ingest.dropped);
    }
    let data = ingest.dataset;
    let n = data.len();
    let n_cal = (a.holdout * n as f64).round() as usize;
    if n - n_cal < 2 || (a.holdout > 0.0 && n_cal == 0) {
        return Err(Error::Data(format!("{n} rows are too few for a holdout of {}", a.holdout)).into());
    }
    let plan = SplitPlan {
        seed: cfg.seed,
        n_total: n,
        n_train: n - n_cal,
        n_cal,
        n_test: 0,
    };
    let split = draw_and_split(&data, &plan)?;
    let model = train(&split.train, &cfg)?.with_summary(&split.train, SUMMARY_ROWS);
    model.save(&a.out)?;
    let final_loss = model.loss_history.last().copied();
    if let Some(l) = final_loss {
        eprintln!("final training loss {l:.6}");
    }

    // Sidecars from an earlier model at the same path would be stale.
    let cal_path = calibration_data_path(&a.out);
    let q_path = quantiles_path(&a.out);
    for p in [&cal_path, &q_path] {
        if p.exists() {
            std::fs::remove_file(p).map_err(|e| AppError::io(p, e))?;
        }
    }
    let cal_file = if n_cal > 0 {
        write_rows(&cal_path, &split.cal)?;
        Some(cal_path)
    } else {
        None
    };
    let q_file = match a.cqr_alpha {
        Some(alpha) => {
            let q = train_quantile_regressor(&split.train, &cfg, alpha)?;
            let text = serde_json::to_string(&q).map_err(Error::from)?;
            std::fs::write(&q_path, text).map_err(|e| AppError::io(&q_path, e))?;
            Some(q_path)
        }
        None => None,
    };
    let bundle = ModelBundle::load(&a.out)?;
    Ok(json!({
        "model": a.out,
        "id": bundle.id(),
        "hash": bundle.hash,
        "final_loss": final_loss,
        "epochs": model.loss_history.len(),
        "n_train": split.train.len(),
        "n_cal": n_cal,
        "dropped_rows": ingest.dropped,
        "calibration_data": cal_file,
        "quantiles": q_file,
    }))
}

fn calibrate_cmd(a: CalibrateArgs) -> AppResult<Value> {
    let bundle = ModelBundle::load(&a.model)?;
    let req = CalibrationRequest {
        method: a.method,
        alpha: a.alpha,
        passes: a.passes,
        seed: a.seed,
    };
    let entry = match &a.data {
        Some(p) => bundle.calibrate_on(&req, &read_rows(p, &bundle.model)?)?,
        None => bundle.calibrate(&req)?,
    };
    let out = match a.out {
        Some(p) => p,
        None => {
            let dir = a.model.parent().unwrap_or(Path::new(".")).join("calibrations");
            std::fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
            dir.join(format!("{}.json", entry.id))
        }
    };
    entry.save(&out)?;
    if let protoforge::uq::Calibration::Confmc(c) = &entry.calibration {
        for w in &c.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(json!({
        "id": entry.id,
        "path": out,
        "model_hash": entry.model_hash,
        "calibration": entry.calibration,
    }))
}

/// Explicit settings must succeed; with none given the default ConfMC
/// entry is attempted and dropped if the model has no calibration rows.
fn interval_entry(bundle: &ModelBundle, a: &IntervalArgs) -> AppResult<Option<CalibrationEntry>> {
    if let Some(p) = &a.calibration {
        let entry = CalibrationEntry::load(p)?;
        bundle.check(&entry)?;
        return Ok(Some(entry));
    }
    let req = CalibrationRequest::new(
        a.method.unwrap_or(Method::Confmc),
        a.alpha.unwrap_or(DEFAULT_ALPHA),
    );
    match bundle.calibrate(&req) {
        Ok(e) => Ok(Some(e)),
        Err(_) if a.method.is_none() && a.alpha.is_none() => Ok(None),
        Err(e) => Err(e),
    }
}

fn predict_cmd(a: PredictArgs) -> AppResult<Value> {
    let bundle = ModelBundle::load(&a.model)?;
    let entry = interval_entry(&bundle, &a.intervals)?;
    let (point, intervals) = bundle.predict(&a.x, entry.as_ref())?;
    Ok(json!({
        "point": point,
        "intervals": intervals,
        "calibration_id": entry.map(|e| e.id),
    }))
}

fn search_cmd(a: SearchArgs) -> AppResult<Value> {
    let bundle = ModelBundle::load(&a.model)?;
    let request: SearchRequest = read_json(&a.spec)?;
    let m = &bundle.model;
    let spec = request.into_spec(m.input_dim(), m.output_dim())?;
    let entry = interval_entry(&bundle, &a.intervals)?;
    let result = multi_start_search(&RawScale(m), &spec)?;
    let (point, intervals) = bundle.predict(&result.x_final, entry.as_ref())?;
    eprintln!(
        "best restart {} reached loss {:.6} after {} iterations",
        result.restart_index,
        result.loss_final,
        result.trajectory.len() - 1
    );
    Ok(json!({
        "result": result,
        "point": point,
        "intervals": intervals,
        "calibration_id": entry.map(|e| e.id),
    }))
}

fn bench_cmd(a: BenchArgs) -> AppResult<Value> {
    let cfg = BenchConfig::load(&a.config)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-seed{}", cfg.master_seed);
    let mut dir = a.out_dir.join(&base);
    let mut k = 2;
    while dir.exists() {
        dir = a.out_dir.join(format!("{base}-{k}"));
        k += 1;
    }
    let (report, _) = run_bench(&cfg)?;
    let files = emit_report(&report, &dir)?;
    let cfg_copy = dir.join("config.json");
    let text = serde_json::to_string_pretty(&cfg).map_err(Error::from)?;
    std::fs::write(&cfg_copy, text).map_err(|e| AppError::io(&cfg_copy, e))?;

    eprintln!("{:<8} {:>14} {:>14}", "method", "AEC", "AIW");
    for s in &report.methods {
        eprintln!(
            "{:<8} {:>6.3} +- {:<5.3} {:>6.3} +- {:<5.3}",
            s.method.as_str(),
            s.aec,
            s.aec_std,
            s.aiw,
            s.aiw_std
        );
    }
    let methods: Vec<Value> = report
        .methods
        .iter()
        .map(|s| {
            json!({
                "method": s.method,
                "AEC": s.aec,
                "AEC_std": s.aec_std,
                "AIW": s.aiw,
                "AIW_std": s.aiw_std,
            })
        })
        .collect();
    Ok(json!({
        "run_dir": dir,
        "report": files.json,
        "summary_csv": files.summary_csv,
        "bins_csv": files.bins_csv,
        "methods": methods,
    }))
}

fn serve_cmd(a: ServeArgs) -> AppResult<Value> {
    let registry = Registry::open(&a.model_dir)?;
    eprintln!(
        "registry {} holds {} models",
        registry.dir().display(),
        registry.models().count()
    );
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let state = AppState::new(registry, workers);
    let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::Internal(e.to_string()))?;
    let addr = SocketAddr::new(a.host, a.port);
    rt.block_on(service::serve(state, addr))
        .map_err(|e| AppError::Internal(format!("{addr}: {e}")))?;
    Ok(json!({ "status": "stopped" }))
}
