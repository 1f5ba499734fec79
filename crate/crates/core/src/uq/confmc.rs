use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::samples::{mc_predict, PredictiveSamples};
use super::{check_alpha, lower_rank, order_statistic, Method, PredictionInterval};
use crate::datakit::{Dataset, TrainedSurrogate};
use crate::error::{check_len, Error, Result};

/// Settings of the uncalibrated MC quantile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub passes: usize,
    pub seed: u64,
}

/// Fitted nested-conformal level per output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfMcCalibration {
    pub alpha: f64,
    pub n_cal: usize,
    #[serde(rename = "K")]
    pub passes: usize,
    pub seed: u64,
    pub t_hat: Vec<f64>,
    /// Conformity scores, `scores[head][i]` for calibration point `i`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<Vec<f64>>,
    /// Heads whose widest nested interval (the full MC sample range) misses
    /// too many calibration targets to reach the requested coverage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// The family tops out at the MC sample range. When more than
/// `floor(alpha (n + 1)) - 1` targets fall outside it, `t_hat` pins at 0 and
/// the finite-sample guarantee no longer holds.
fn saturation_warnings(scores: &[Vec<f64>], alpha: f64) -> Vec<String> {
    scores
        .iter()
        .enumerate()
        .filter_map(|(h, s)| {
            let n = s.len();
            let outside = s.iter().filter(|&&r| r == 0.0).count();
            let k = lower_rank(n, alpha);
            (k >= 1 && outside >= k).then(|| {
                format!(
                    "head {h}: {outside} of {n} calibration targets fall outside the MC sample \
                     range; intervals cannot reach {:.3} coverage",
                    1.0 - alpha
                )
            })
        })
        .collect()
}

/// `floor(alpha (n + 1))`-th smallest conformity score, or 0 when that rank
/// is 0.
pub fn confmc_t_hat(scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    let k = lower_rank(scores.len(), alpha);
    Ok(match k {
        0 => 0.0,
        k => order_statistic(scores, k.min(scores.len())),
    })
}

/// Runs `passes` MC forwards at every calibration point (same seed for every
/// point) and picks the nested level per head.
pub fn confmc_calibrate(
    surrogate: &TrainedSurrogate,
    cal: &Dataset,
    alpha: f64,
    passes: usize,
    seed: u64,
) -> Result<ConfMcCalibration> {
    check_alpha(alpha)?;
    if cal.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    check_len("calibration features", surrogate.input_dim(), cal.n_features())?;
    check_len("calibration targets", surrogate.output_dim(), cal.n_targets())?;
    let m = surrogate.output_dim();
    let per_point: Vec<Vec<f64>> = cal
        .x
        .par_iter()
        .zip(&cal.y)
        .map(|(x, y)| {
            let samples = mc_predict(x, surrogate, passes, seed)?;
            Ok(samples
                .iter()
                .enumerate()
                .map(|(h, s)| s.conformity(surrogate.standardizer.transform_target(h, y[h])))
                .collect())
        })
        .collect::<Result<_>>()?;
    let scores: Vec<Vec<f64>> = (0..m)
        .map(|h| per_point.iter().map(|r| r[h]).collect())
        .collect();
    let t_hat = scores
        .iter()
        .map(|s| confmc_t_hat(s, alpha))
        .collect::<Result<_>>()?;
    Ok(ConfMcCalibration {
        alpha,
        n_cal: cal.len(),
        passes,
        seed,
        t_hat,
        warnings: saturation_warnings(&scores, alpha),
        scores,
    })
}

impl ConfMcCalibration {
    /// Same scores at a different `alpha`: no forward passes needed.
    pub fn recalibrate(&self, alpha: f64) -> Result<Self> {
        if self.scores.is_empty() {
            return Err(Error::Calibration(
                "conformity scores were not kept; recalibrate from data".into(),
            ));
        }
        let t_hat = self
            .scores
            .iter()
            .map(|s| confmc_t_hat(s, alpha))
            .collect::<Result<_>>()?;
        Ok(Self {
            alpha,
            t_hat,
            warnings: saturation_warnings(&self.scores, alpha),
            ..self.clone()
        })
    }
}

pub fn confmc_interval_from_samples(
    samples: &PredictiveSamples,
    t_hat: f64,
    alpha: f64,
) -> PredictionInterval {
    let (lower, upper) = samples.nested_interval(t_hat);
    PredictionInterval {
        lower,
        upper,
        method: Method::Confmc,
        alpha,
    }
}

/// Fresh MC samples at raw features `x`, drawn with the calibration's pass
/// count and seed, cut at `t_hat` per head.
pub fn confmc_interval(
    x: &[f64],
    surrogate: &TrainedSurrogate,
    calib: &ConfMcCalibration,
) -> Result<Vec<PredictionInterval>> {
    check_len("calibration heads", surrogate.output_dim(), calib.t_hat.len())?;
    let samples = mc_predict(x, surrogate, calib.passes, calib.seed)?;
    Ok(samples
        .iter()
        .zip(&calib.t_hat)
        .map(|(s, &t)| confmc_interval_from_samples(s, t, calib.alpha))
        .collect())
}

/// `[Q(alpha / 2), Q(1 - alpha / 2)]` per head, uncalibrated.
pub fn raw_mc_interval(
    x: &[f64],
    surrogate: &TrainedSurrogate,
    alpha: f64,
    passes: usize,
    seed: u64,
) -> Result<Vec<PredictionInterval>> {
    check_alpha(alpha)?;
    let samples = mc_predict(x, surrogate, passes, seed)?;
    Ok(samples
        .iter()
        .map(|s| {
            let (lower, upper) = s.nested_interval(alpha);
            PredictionInterval {
                lower,
                upper,
                method: Method::Mc,
                alpha,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_hat_order_statistic() {
        assert_eq!(confmc_t_hat(&[0.9, 0.1, 0.6, 0.4], 0.2).unwrap(), 0.1);
        assert_eq!(confmc_t_hat(&[0.9, 0.1, 0.6, 0.4], 0.1).unwrap(), 0.0);
        assert!(confmc_t_hat(&[], 0.2).is_err());
        assert!(confmc_t_hat(&[0.5], 0.0).is_err());
    }

    #[test]
    fn saturation_is_flagged() {
        // k = floor(0.2 * 5) = 1 and one target outside the sample range
        assert_eq!(saturation_warnings(&[vec![0.0, 0.4, 0.6, 0.9]], 0.2).len(), 1);
        assert!(saturation_warnings(&[vec![0.1, 0.4, 0.6, 0.9]], 0.2).is_empty());
        // k = 0: full range is already what the guarantee asks for
        assert!(saturation_warnings(&[vec![0.0, 0.4, 0.6, 0.9]], 0.1).is_empty());
    }

    #[test]
    fn interval_extremes() {
        let s = PredictiveSamples::new(vec![1.0, 2.0, 4.0, 5.0, 3.0], 0).unwrap();
        let full = confmc_interval_from_samples(&s, 0.0, 0.2);
        assert_eq!((full.lower, full.upper), (1.0, 5.0));
        let point = confmc_interval_from_samples(&s, 1.0, 0.2);
        assert_eq!((point.lower, point.upper), (3.0, 3.0));
    }
}
