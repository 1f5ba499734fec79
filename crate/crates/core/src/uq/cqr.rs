use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_alpha, order_statistic, upper_rank, Method, PredictionInterval};
use crate::datakit::{train, Dataset, TrainConfig, TrainedSurrogate};
use crate::error::{check_len, Error, Result};
use crate::seed;

/// Lower and upper pinball-trained heads at levels `alpha / 2` and
/// `1 - alpha / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRegressor {
    pub alpha: f64,
    pub lo: TrainedSurrogate,
    pub hi: TrainedSurrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqrCalibration {
    pub alpha: f64,
    pub n_cal: usize,
    /// Quantile levels of the heads this correction was fitted with.
    pub levels: (f64, f64),
    /// Added to the upper head and subtracted from the lower; may be
    /// negative.
    pub correction: f64,
}

/// Trains the two quantile heads. `cfg.loss` is replaced by pinball losses
/// and each head gets its own seed derived from `cfg.seed`.
pub fn train_quantile_regressor(
    data: &Dataset,
    cfg: &TrainConfig,
    alpha: f64,
) -> Result<QuantileRegressor> {
    check_alpha(alpha)?;
    let m = data.n_targets();
    let head = |level: f64, which: u64| {
        let mut c = cfg.with_pinball(level, m);
        c.seed = seed::derive(cfg.seed, &[seed::TAG_QUANTILE_HEAD, which]);
        train(data, &c)
    };
    let (lo, hi) = rayon::join(|| head(alpha / 2.0, 0), || head(1.0 - alpha / 2.0, 1));
    Ok(QuantileRegressor {
        alpha,
        lo: lo?,
        hi: hi?,
    })
}

/// `ceil((n + 1)(1 - alpha))`-th smallest score, `+inf` past `n`.
pub fn cqr_correction(scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    Ok(order_statistic(scores, upper_rank(scores.len(), alpha)))
}

fn head_predictions(x: &[f64], model: &TrainedSurrogate) -> Result<Vec<f64>> {
    model.predict_standardized(&model.standardizer.transform_x(x))
}

/// Single-output only: the correction is a scalar. Scores use the
/// standardized target scale of `lo`.
pub fn cqr_calibrate(
    lo: &TrainedSurrogate,
    hi: &TrainedSurrogate,
    cal: &Dataset,
    alpha: f64,
) -> Result<CqrCalibration> {
    check_alpha(alpha)?;
    if cal.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    check_len("quantile head outputs", 1, lo.output_dim())?;
    check_len("quantile head outputs", 1, hi.output_dim())?;
    check_len("calibration targets", 1, cal.n_targets())?;
    check_len("calibration features", lo.input_dim(), cal.n_features())?;
    let scores: Vec<f64> = cal
        .x
        .par_iter()
        .zip(&cal.y)
        .map(|(x, y)| {
            let y = lo.standardizer.transform_target(0, y[0]);
            let q_lo = head_predictions(x, lo)?[0];
            let q_hi = hi.standardizer.inverse_target(0, head_predictions(x, hi)?[0]);
            let q_hi = lo.standardizer.transform_target(0, q_hi);
            Ok((q_lo - y).max(y - q_hi))
        })
        .collect::<Result<_>>()?;
    let levels = pinball_levels(lo, hi).unwrap_or((alpha / 2.0, 1.0 - alpha / 2.0));
    Ok(CqrCalibration {
        alpha,
        n_cal: cal.len(),
        levels,
        correction: cqr_correction(&scores, alpha)?,
    })
}

fn pinball_levels(lo: &TrainedSurrogate, hi: &TrainedSurrogate) -> Option<(f64, f64)> {
    use crate::netcore::Loss;
    match (&lo.train_config.loss, &hi.train_config.loss) {
        (Loss::Pinball(a), Loss::Pinball(b)) => Some((*a.first()?, *b.first()?)),
        _ => None,
    }
}

/// `[q_lo(x) - c, q_hi(x) + c]` on the standardized scale of `lo`. A
/// negative correction large enough to cross the endpoints collapses the
/// interval to their midpoint.
pub fn cqr_interval(
    x: &[f64],
    lo: &TrainedSurrogate,
    hi: &TrainedSurrogate,
    calib: &CqrCalibration,
) -> Result<Vec<PredictionInterval>> {
    check_len("feature vector", lo.input_dim(), x.len())?;
    let q_lo = head_predictions(x, lo)?[0];
    let q_hi = lo
        .standardizer
        .transform_target(0, hi.standardizer.inverse_target(0, head_predictions(x, hi)?[0]));
    let (mut lower, mut upper) = (q_lo - calib.correction, q_hi + calib.correction);
    if lower > upper {
        let mid = 0.5 * (lower + upper);
        lower = mid;
        upper = mid;
    }
    Ok(vec![PredictionInterval {
        lower,
        upper,
        method: Method::Cqr,
        alpha: calib.alpha,
    }])
}
