use serde::{Deserialize, Serialize};

use crate::datakit::TrainedSurrogate;
use crate::error::{check_len, Error, Result};
use crate::netcore::ForwardMode;

/// Default number of Monte Carlo dropout passes.
pub const DEFAULT_PASSES: usize = 200;

/// Sorted Monte Carlo dropout draws for one input and one output head.
///
/// Quantiles interpolate linearly between order statistics, with the `k`-th
/// smallest of `K` draws sitting at level `(k - 0.5) / K`; levels outside
/// `[0.5 / K, 1 - 0.5 / K]` clamp to the extreme draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSamples {
    values: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl PredictiveSamples {
    pub fn new(mut values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 Monte Carlo samples, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Monte Carlo samples"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            values,
            seed,
            warning: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn quantile(&self, level: f64) -> f64 {
        let k = self.values.len();
        let pos = level * k as f64 + 0.5; // 1-based order-statistic position
        if !(pos > 1.0) {
            return self.values[0];
        }
        if pos >= k as f64 {
            return self.values[k - 1];
        }
        let j = pos.floor() as usize; // 1 <= j < k
        let frac = pos - j as f64;
        let (lo, hi) = (self.values[j - 1], self.values[j]);
        lo + frac * (hi - lo)
    }

    /// `[Q(t / 2), Q(1 - t / 2)]`; shrinks as `t` grows.
    pub fn nested_interval(&self, t: f64) -> (f64, f64) {
        (self.quantile(0.5 * t), self.quantile(1.0 - 0.5 * t))
    }

    /// Largest `t` in `[0, 1]` whose nested interval still contains `y`:
    /// `min(1, 2 a, 2 (1 - b))` with `a` the largest level whose quantile is
    /// `<= y` and `b` the smallest level whose quantile is `>= y`. Values
    /// outside the sample range score 0.
    pub fn conformity(&self, y: f64) -> f64 {
        let k = self.values.len();
        let kf = k as f64;
        let v = &self.values;
        if y < v[0] || y > v[k - 1] {
            return 0.0;
        }
        // samples <= y and samples < y
        let n_le = v.partition_point(|&s| s <= y);
        let n_lt = v.partition_point(|&s| s < y);
        let a = if n_le >= k {
            1.0
        } else {
            let j = n_le; // v[j-1] <= y < v[j], j >= 1
            let frac = (y - v[j - 1]) / (v[j] - v[j - 1]);
            (j as f64 - 0.5 + frac) / kf
        };
        let b = if n_lt == 0 {
            0.0
        } else {
            let i = n_lt; // v[i-1] < y <= v[i], i < k
            let frac = (y - v[i - 1]) / (v[i] - v[i - 1]);
            (i as f64 - 0.5 + frac) / kf
        };
        (2.0 * a).min(2.0 * (1.0 - b)).clamp(0.0, 1.0)
    }
}

pub fn quantile(samples: &PredictiveSamples, level: f64) -> f64 {
    samples.quantile(level)
}

/// `passes` seeded stochastic forward passes at a raw feature vector, one
/// [`PredictiveSamples`] per output head on the standardized target scale.
pub fn mc_predict(
    x: &[f64],
    surrogate: &TrainedSurrogate,
    passes: usize,
    seed: u64,
) -> Result<Vec<PredictiveSamples>> {
    check_len("feature vector", surrogate.input_dim(), x.len())?;
    mc_predict_standardized(&surrogate.standardizer.transform_x(x), surrogate, passes, seed)
}

pub fn mc_predict_standardized(
    x_std: &[f64],
    surrogate: &TrainedSurrogate,
    passes: usize,
    seed: u64,
) -> Result<Vec<PredictiveSamples>> {
    if passes < 2 {
        return Err(Error::Config(format!("need at least 2 passes, got {passes}")));
    }
    let net = &surrogate.network;
    let m = net.arch.output_dim;
    let mut tape = net.tape();
    let mut draws = vec![Vec::with_capacity(passes); m];
    for pass in 0..passes {
        let out = tape.forward(x_std, &net.params, &net.arch, ForwardMode::mc_pass(seed, pass as u64))?;
        for (d, &o) in draws.iter_mut().zip(out) {
            d.push(o);
        }
    }
    let warning = (net.arch.dropout_rate == 0.0)
        .then(|| "dropout_rate is 0: all Monte Carlo samples are identical".to_string());
    draws
        .into_iter()
        .map(|d| {
            let mut s = PredictiveSamples::new(d, seed)?;
            s.warning = warning.clone();
            Ok(s)
        })
        .collect()
}
