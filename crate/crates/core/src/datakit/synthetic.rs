//! Synthetic regression generators used by tests and the benchmark harness.
//!
//! Every generator is exchangeable by construction: rows are i.i.d. draws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `x ~ U[-1, 1]^d`, `y = m(x) + noise * N(0, 1)`.
    Homoscedastic {
        n_rows: usize,
        n_features: usize,
        noise: f64,
        seed: u64,
    },
    /// `x ~ U[-1, 1]^d`, `y = m(x) + (base_noise + slope * |x1|) * N(0, 1)`.
    /// The noise level is smallest in the middle of the first axis.
    Heteroscedastic {
        n_rows: usize,
        n_features: usize,
        base_noise: f64,
        slope: f64,
        seed: u64,
    },
    /// `x ~ U[-half_width, half_width]^d`, `y = -||x - center||^2`.
    NegQuadratic {
        n_rows: usize,
        center: Vec<f64>,
        half_width: f64,
        seed: u64,
    },
}

/// `m(x) = 2 x1 + 0.5 sin(pi x2) + 0.5 x3^2`, using as many terms as there are
/// features.
fn mean_response(x: &[f64]) -> f64 {
    let mut y = 2.0 * x[0];
    if let Some(&x2) = x.get(1) {
        y += 0.5 * (PI * x2).sin();
    }
    if let Some(&x3) = x.get(2) {
        y += 0.5 * x3 * x3;
    }
    y
}

impl Generator {
    pub fn n_features(&self) -> usize {
        match self {
            Generator::Homoscedastic { n_features, .. }
            | Generator::Heteroscedastic { n_features, .. } => *n_features,
            Generator::NegQuadratic { center, .. } => center.len(),
        }
    }

    /// Standard deviation of the additive noise at `x`.
    pub fn noise_level(&self, x: &[f64]) -> f64 {
        match self {
            Generator::Homoscedastic { noise, .. } => *noise,
            Generator::Heteroscedastic {
                base_noise, slope, ..
            } => base_noise + slope * x[0].abs(),
            Generator::NegQuadratic { .. } => 0.0,
        }
    }

    pub fn generate(&self) -> Dataset {
        let d = self.n_features().max(1);
        let (n_rows, seed, lo, hi) = match self {
            Generator::Homoscedastic { n_rows, seed, .. } => (*n_rows, *seed, -1.0, 1.0),
            Generator::Heteroscedastic { n_rows, seed, .. } => (*n_rows, *seed, -1.0, 1.0),
            Generator::NegQuadratic {
                n_rows,
                seed,
                half_width,
                ..
            } => (*n_rows, *seed, -half_width, *half_width),
        };
        let mut rng = seed::rng(seed, &[0x5EED]);
        let mut x = Vec::with_capacity(n_rows);
        let mut y = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let row: Vec<f64> = (0..d).map(|_| rng.gen_range(lo..=hi)).collect();
            let target = match self {
                Generator::NegQuadratic { center, .. } => {
                    -row.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>()
                }
                _ => {
                    let eps: f64 = rng.sample(StandardNormal);
                    mean_response(&row) + self.noise_level(&row) * eps
                }
            };
            x.push(row);
            y.push(vec![target]);
        }
        Dataset {
            feature_names: (1..=d).map(|j| format!("x{j}")).collect(),
            target_names: vec!["y".into()],
            x,
            y,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        let g = Generator::Heteroscedastic {
            n_rows: 50,
            n_features: 3,
            base_noise: 0.1,
            slope: 1.0,
            seed: 4,
        };
        assert_eq!(g.generate(), g.generate());
        let ds = g.generate();
        ds.validate().unwrap();
        assert!(ds.x.iter().all(|r| r.iter().all(|v| (-1.0..=1.0).contains(v))));
    }

    #[test]
    fn neg_quadratic_peaks_at_center() {
        let g = Generator::NegQuadratic {
            n_rows: 200,
            center: vec![0.3, -0.2],
            half_width: 1.0,
            seed: 1,
        };
        let ds = g.generate();
        assert!(ds.y.iter().all(|y| y[0] <= 0.0));
    }
}
