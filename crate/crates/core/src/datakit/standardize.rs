use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Per-column affine standardization for features and targets, fitted on a
/// training split. Standard deviations use the population convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

impl Standardizer {
    /// No-op scaling for `d` features and `m` targets.
    pub fn identity(d: usize, m: usize) -> Self {
        Self {
            x_mean: vec![0.0; d],
            x_std: vec![1.0; d],
            y_mean: vec![0.0; m],
            y_std: vec![1.0; m],
        }
    }
}

fn column_stats(rows: &[Vec<f64>], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn fit_standardizer(train: &Dataset) -> Result<Standardizer> {
    if train.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 training rows to standardize, got {}",
            train.len()
        )));
    }
    let fit = |rows: &[Vec<f64>], names: &[String]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut means = Vec::with_capacity(names.len());
        let mut stds = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let (m, s) = column_stats(rows, j);
            if !(s > 1e-12 * m.abs().max(1.0)) {
                return Err(Error::ConstantColumn(name.clone()));
            }
            means.push(m);
            stds.push(s);
        }
        Ok((means, stds))
    };
    let (x_mean, x_std) = fit(&train.x, &train.feature_names)?;
    let (y_mean, y_std) = fit(&train.y, &train.target_names)?;
    Ok(Standardizer {
        x_mean,
        x_std,
        y_mean,
        y_std,
    })
}

fn forward(v: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    v.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect()
}

fn inverse(v: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    v.iter().zip(mean).zip(std).map(|((v, m), s)| v * s + m).collect()
}

impl Standardizer {
    pub fn transform_x(&self, x: &[f64]) -> Vec<f64> {
        forward(x, &self.x_mean, &self.x_std)
    }

    pub fn inverse_x(&self, x: &[f64]) -> Vec<f64> {
        inverse(x, &self.x_mean, &self.x_std)
    }

    pub fn transform_y(&self, y: &[f64]) -> Vec<f64> {
        forward(y, &self.y_mean, &self.y_std)
    }

    pub fn inverse_y(&self, y: &[f64]) -> Vec<f64> {
        inverse(y, &self.y_mean, &self.y_std)
    }

    /// Standardized value of target `head`.
    pub fn transform_target(&self, head: usize, v: f64) -> f64 {
        (v - self.y_mean[head]) / self.y_std[head]
    }

    pub fn inverse_target(&self, head: usize, v: f64) -> f64 {
        v * self.y_std[head] + self.y_mean[head]
    }

    pub fn transform_feature(&self, j: usize, v: f64) -> f64 {
        (v - self.x_mean[j]) / self.x_std[j]
    }

    pub fn inverse_feature(&self, j: usize, v: f64) -> f64 {
        v * self.x_std[j] + self.x_mean[j]
    }

    /// The whole dataset on the standardized scale.
    pub fn transform(&self, ds: &Dataset) -> Dataset {
        Dataset {
            feature_names: ds.feature_names.clone(),
            target_names: ds.target_names.clone(),
            x: ds.x.iter().map(|r| self.transform_x(r)).collect(),
            y: ds.y.iter().map(|r| self.transform_y(r)).collect(),
        }
    }
}
