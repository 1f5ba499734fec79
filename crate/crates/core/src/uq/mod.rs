//! Prediction intervals around a trained surrogate.
//!
//! Four methods share one interface:
//!
//! * `mc`: raw Monte Carlo dropout quantiles `[Q(a/2), Q(1 - a/2)]`, no
//!   calibration;
//! * `confmc`: nested conformal calibration over the family
//!   `[Q(t/2), Q(1 - t/2)]` of MC dropout quantile intervals;
//! * `cp`: split conformal with absolute residuals (constant width);
//! * `cqr`: conformalized quantile regression with pinball-trained heads.
//!
//! Features come in raw units; intervals are on the standardized target
//! scale of the surrogate (see [`PredictionInterval::to_raw`]).

mod confmc;
mod cqr;
mod samples;
mod splitcp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use confmc::{
    confmc_calibrate, confmc_interval, confmc_interval_from_samples, confmc_t_hat,
    raw_mc_interval, ConfMcCalibration, McSettings,
};
pub use cqr::{
    cqr_calibrate, cqr_correction, cqr_interval, train_quantile_regressor, CqrCalibration,
    QuantileRegressor,
};
pub use samples::{
    mc_predict, mc_predict_standardized, quantile, PredictiveSamples, DEFAULT_PASSES,
};
pub use splitcp::{split_cp_quantile, splitcp_calibrate, splitcp_interval, SplitCpCalibration};

use crate::datakit::{Standardizer, TrainedSurrogate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cp,
    Cqr,
    Mc,
    Confmc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cp, Method::Cqr, Method::Mc, Method::Confmc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cp => "cp",
            Method::Cqr => "cqr",
            Method::Mc => "mc",
            Method::Confmc => "confmc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (cp, cqr, mc, confmc)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
    pub alpha: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    /// Same interval in raw units of target `head`.
    pub fn to_raw(&self, standardizer: &Standardizer, head: usize) -> Self {
        Self {
            lower: standardizer.inverse_target(head, self.lower),
            upper: standardizer.inverse_target(head, self.upper),
            ..*self
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// `floor(alpha * (n + 1))`, robust to the product landing a hair below an
/// integer.
pub fn lower_rank(n: usize, alpha: f64) -> usize {
    ((alpha * (n + 1) as f64 + 1e-9).floor() as usize).min(n + 1)
}

/// `ceil((n + 1)(1 - alpha))`, the finite-sample conformal order statistic.
pub fn upper_rank(n: usize, alpha: f64) -> usize {
    n + 1 - lower_rank(n, alpha)
}

/// `rank`-th smallest value (1-based) of `values`, or `+inf` when the rank
/// exceeds the number of values.
pub(crate) fn order_statistic(values: &[f64], rank: usize) -> f64 {
    if rank == 0 {
        return f64::NEG_INFINITY;
    }
    if rank > values.len() {
        return f64::INFINITY;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[rank - 1]
}

/// Calibration state of any method, tagged by `method` on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Calibration {
    Cp(SplitCpCalibration),
    Cqr(CqrCalibration),
    Mc(McSettings),
    Confmc(ConfMcCalibration),
}

impl Calibration {
    pub fn method(&self) -> Method {
        match self {
            Calibration::Cp(_) => Method::Cp,
            Calibration::Cqr(_) => Method::Cqr,
            Calibration::Mc(_) => Method::Mc,
            Calibration::Confmc(_) => Method::Confmc,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Calibration::Cp(c) => c.alpha,
            Calibration::Cqr(c) => c.alpha,
            Calibration::Mc(c) => c.alpha,
            Calibration::Confmc(c) => c.alpha,
        }
    }

    /// One interval per output head at raw features `x`. `quantiles` must be
    /// given for CQR.
    pub fn intervals(
        &self,
        x: &[f64],
        surrogate: &TrainedSurrogate,
        quantiles: Option<&QuantileRegressor>,
    ) -> Result<Vec<PredictionInterval>> {
        match self {
            Calibration::Cp(c) => splitcp_interval(x, surrogate, c),
            Calibration::Cqr(c) => {
                let q = quantiles.ok_or_else(|| {
                    Error::Calibration("CQR intervals need the quantile heads".into())
                })?;
                cqr_interval(x, &q.lo, &q.hi, c)
            }
            Calibration::Mc(c) => raw_mc_interval(x, surrogate, c.alpha, c.passes, c.seed),
            Calibration::Confmc(c) => confmc_interval(x, surrogate, c),
        }
    }

    /// [`Calibration::intervals`] mapped back to raw target units.
    pub fn raw_intervals(
        &self,
        x: &[f64],
        surrogate: &TrainedSurrogate,
        quantiles: Option<&QuantileRegressor>,
    ) -> Result<Vec<PredictionInterval>> {
        let scale = match (self, quantiles) {
            (Calibration::Cqr(_), Some(q)) => &q.lo.standardizer,
            _ => &surrogate.standardizer,
        };
        Ok(self
            .intervals(x, surrogate, quantiles)?
            .iter()
            .enumerate()
            .map(|(h, iv)| iv.to_raw(scale, h))
            .collect())
    }
}

/// Serde adapter mapping `+inf` to JSON `null` for sentinel quantiles.
pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<Option<f64>>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(lower_rank(4, 0.2), 1);
        assert_eq!(upper_rank(4, 0.2), 4);
        assert_eq!(upper_rank(3, 0.5), 2);
        assert_eq!(upper_rank(188, 0.2), 152);
        // 0.29 * 100 is 28.999999999999996 in floating point
        assert_eq!(lower_rank(99, 0.29), 29);
        assert_eq!(lower_rank(3, 0.1), 0);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("ngb".parse::<Method>().is_err());
    }
}
