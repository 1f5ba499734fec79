use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_alpha, inf_as_null, order_statistic, upper_rank, Method, PredictionInterval};
use crate::datakit::{Dataset, TrainedSurrogate};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCpCalibration {
    pub alpha: f64,
    pub n_cal: usize,
    /// Residual quantile per head; `+inf` (JSON `null`) when the
    /// calibration set is too small for `alpha`.
    #[serde(with = "inf_as_null")]
    pub q_hat: Vec<f64>,
}

/// `ceil((n + 1)(1 - alpha))`-th smallest residual, `+inf` past `n`.
pub fn split_cp_quantile(residuals: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if residuals.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    Ok(order_statistic(residuals, upper_rank(residuals.len(), alpha)))
}

pub(crate) fn standardized_residuals(
    surrogate: &TrainedSurrogate,
    cal: &Dataset,
) -> Result<Vec<Vec<f64>>> {
    check_len("calibration features", surrogate.input_dim(), cal.n_features())?;
    check_len("calibration targets", surrogate.output_dim(), cal.n_targets())?;
    let per_point: Vec<Vec<f64>> = cal
        .x
        .par_iter()
        .zip(&cal.y)
        .map(|(x, y)| {
            let pred = surrogate.predict_standardized(&surrogate.standardizer.transform_x(x))?;
            Ok(pred
                .iter()
                .enumerate()
                .map(|(h, p)| (surrogate.standardizer.transform_target(h, y[h]) - p).abs())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..surrogate.output_dim())
        .map(|h| per_point.iter().map(|r| r[h]).collect())
        .collect())
}

pub fn splitcp_calibrate(
    surrogate: &TrainedSurrogate,
    cal: &Dataset,
    alpha: f64,
) -> Result<SplitCpCalibration> {
    check_alpha(alpha)?;
    if cal.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    let q_hat = standardized_residuals(surrogate, cal)?
        .iter()
        .map(|r| split_cp_quantile(r, alpha))
        .collect::<Result<_>>()?;
    Ok(SplitCpCalibration {
        alpha,
        n_cal: cal.len(),
        q_hat,
    })
}

/// `[f(x) - q_hat, f(x) + q_hat]` per head.
pub fn splitcp_interval(
    x: &[f64],
    surrogate: &TrainedSurrogate,
    calib: &SplitCpCalibration,
) -> Result<Vec<PredictionInterval>> {
    check_len("feature vector", surrogate.input_dim(), x.len())?;
    check_len("calibration heads", surrogate.output_dim(), calib.q_hat.len())?;
    let pred = surrogate.predict_standardized(&surrogate.standardizer.transform_x(x))?;
    Ok(pred
        .iter()
        .zip(&calib.q_hat)
        .map(|(&p, &q)| PredictionInterval {
            lower: p - q,
            upper: p + q,
            method: Method::Cp,
            alpha: calib.alpha,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        assert_eq!(split_cp_quantile(&[4.0, 2.0, 1.0, 3.0], 0.2).unwrap(), 4.0);
        assert_eq!(split_cp_quantile(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.0);
        assert_eq!(split_cp_quantile(&[1.0, 2.0, 3.0], 0.1).unwrap(), f64::INFINITY);
        assert!(split_cp_quantile(&[], 0.2).is_err());
    }

    #[test]
    fn infinite_quantile_is_null_on_the_wire() {
        let c = SplitCpCalibration {
            alpha: 0.1,
            n_cal: 3,
            q_hat: vec![f64::INFINITY, 0.5],
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"q_hat\":[null,0.5]"), "{s}");
        assert_eq!(serde_json::from_str::<SplitCpCalibration>(&s).unwrap(), c);
    }
}
