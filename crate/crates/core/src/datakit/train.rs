use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit_standardizer, Dataset, Standardizer};
use crate::error::{check_len, Error, Result};
use crate::netcore::{Activation, Architecture, ForwardMode, Loss, Network, Parameters};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Training hyper-parameters. The input and output widths of the network
/// come from the data; everything else about the architecture lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            activation: Activation::Relu,
            dropout_rate: 0.1,
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            loss: Loss::Mse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if let Loss::Pinball(levels) = &self.loss {
            if levels.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::Config("pinball levels must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize, output_dim: usize) -> Result<Architecture> {
        Architecture::new(
            input_dim,
            output_dim,
            self.hidden_layers.clone(),
            self.activation,
            self.dropout_rate,
        )
    }

    /// Same config with pinball heads at `level` for each of `heads` outputs.
    pub fn with_pinball(&self, level: f64, heads: usize) -> Self {
        Self {
            loss: Loss::Pinball(vec![level; heads]),
            ..self.clone()
        }
    }
}

/// Ranges and a row sample of the training data, kept with the model so a
/// front-end can draw tested products without the original CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_rows: usize,
    pub feature_ranges: Vec<(f64, f64)>,
    pub target_ranges: Vec<(f64, f64)>,
    pub sample_x: Vec<Vec<f64>>,
    pub sample_y: Vec<Vec<f64>>,
}

impl DataSummary {
    pub fn from_dataset(ds: &Dataset, max_points: usize, seed: u64) -> Self {
        let idx: Vec<usize> = if ds.len() <= max_points {
            (0..ds.len()).collect()
        } else {
            let mut rng = seed::rng(seed, &[seed::TAG_SPLIT, 1]);
            let mut v = rand::seq::index::sample(&mut rng, ds.len(), max_points).into_vec();
            v.sort_unstable();
            v
        };
        let target_ranges = (0..ds.n_targets())
            .map(|j| {
                ds.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[j]), hi.max(r[j]))
                })
            })
            .collect();
        Self {
            n_rows: ds.len(),
            feature_ranges: ds.feature_ranges(),
            target_ranges,
            sample_x: idx.iter().map(|&i| ds.x[i].clone()).collect(),
            sample_y: idx.iter().map(|&i| ds.y[i].clone()).collect(),
        }
    }
}

/// A trained network together with the scaling it was trained under.
///
/// The network maps standardized features to standardized targets.
/// Persists as `{arch, layers, standardizer, feature_names, target_names,
/// train_config, loss_history}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSurrogate {
    #[serde(flatten)]
    pub network: Network,
    pub standardizer: Standardizer,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub train_config: TrainConfig,
    pub loss_history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_summary: Option<DataSummary>,
}

impl TrainedSurrogate {
    /// Wraps a bare network with identity scaling and generated column
    /// names (`x1..`, `y1..`).
    pub fn from_network(network: Network) -> Self {
        let (d, m) = (network.arch.input_dim, network.arch.output_dim);
        let train_config = TrainConfig {
            hidden_layers: network.arch.hidden_layers.clone(),
            activation: network.arch.activation,
            dropout_rate: network.arch.dropout_rate,
            ..TrainConfig::default()
        };
        Self {
            network,
            standardizer: Standardizer::identity(d, m),
            feature_names: (1..=d).map(|j| format!("x{j}")).collect(),
            target_names: (1..=m).map(|j| format!("y{j}")).collect(),
            train_config,
            loss_history: Vec::new(),
            data_summary: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.network.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.network.arch.output_dim
    }

    /// Deterministic prediction on the standardized scale.
    pub fn predict_standardized(&self, x_std: &[f64]) -> Result<Vec<f64>> {
        self.network.forward(x_std, ForwardMode::Deterministic)
    }

    /// Deterministic prediction in raw units.
    pub fn predict(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        check_len("feature vector", self.input_dim(), x_raw.len())?;
        let y = self.predict_standardized(&self.standardizer.transform_x(x_raw))?;
        Ok(self.standardizer.inverse_y(&y))
    }

    pub fn with_summary(mut self, ds: &Dataset, max_points: usize) -> Self {
        self.data_summary = Some(DataSummary::from_dataset(ds, max_points, self.train_config.seed));
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TrainedSurrogate = serde_json::from_str(s)?;
        model.network.arch.validate()?;
        model.network.params.validate(&model.network.arch)?;
        check_len("feature names", model.input_dim(), model.feature_names.len())?;
        check_len("target names", model.output_dim(), model.target_names.len())?;
        check_len("standardizer features", model.input_dim(), model.standardizer.x_mean.len())?;
        check_len("standardizer targets", model.output_dim(), model.standardizer.y_mean.len())?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Fits a standardizer on `train` and trains on the standardized data.
pub fn train(train: &Dataset, cfg: &TrainConfig) -> Result<TrainedSurrogate> {
    let standardizer = fit_standardizer(train)?;
    train_with_standardizer(train, standardizer, cfg)
}

/// Seeded mini-batch training with dropout active.
///
/// Each epoch visits the rows in a freshly shuffled order; the recorded loss
/// is the mean per-example loss seen during that epoch.
pub fn train_with_standardizer(
    train: &Dataset,
    standardizer: Standardizer,
    cfg: &TrainConfig,
) -> Result<TrainedSurrogate> {
    cfg.validate()?;
    train.validate()?;
    let arch = cfg.architecture(train.n_features(), train.n_targets())?;
    if let Loss::Pinball(levels) = &cfg.loss {
        check_len("pinball levels", arch.output_dim, levels.len())?;
    }
    let data = standardizer.transform(train);
    let mut params = Parameters::init(&arch, cfg.seed);
    let mut grads = Parameters::zeros(&arch);
    let mut opt = OptimizerState::new(cfg.optimizer, &arch);
    let mut tape = crate::netcore::Tape::new(&arch);
    let mut d_out = vec![0.0; arch.output_dim];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let fail = |source: Error| Error::Training {
            epoch: epoch + 1,
            source: Box::new(source),
        };
        let mut rng = seed::rng(cfg.seed, &[seed::TAG_SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill(0.0);
            for (k, &i) in batch.iter().enumerate() {
                let mode = if arch.dropout_rate > 0.0 {
                    let pos = (b * cfg.batch_size + k) as u64;
                    ForwardMode::Stochastic {
                        seed: seed::derive(cfg.seed, &[seed::TAG_TRAIN_DROPOUT, epoch as u64, pos]),
                    }
                } else {
                    ForwardMode::Deterministic
                };
                let pred = tape.forward(&data.x[i], &params, &arch, mode).map_err(fail)?;
                total += cfg.loss.eval(pred, &data.y[i], &mut d_out).map_err(fail)?;
                tape.backward(&params, &arch, &d_out, Some(&mut grads), None)
                    .map_err(fail)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            opt.step(&mut params, &grads, cfg.learning_rate);
        }
        let epoch_loss = total / data.len() as f64;
        if !epoch_loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
            return Err(fail(Error::Domain("training loss")));
        }
        history.push(epoch_loss);
    }

    Ok(TrainedSurrogate {
        network: Network { arch, params },
        standardizer,
        feature_names: train.feature_names.clone(),
        target_names: train.target_names.clone(),
        train_config: cfg.clone(),
        loss_history: history,
        data_summary: None,
    })
}

struct OptimizerState {
    kind: Optimizer,
    m: Parameters,
    v: Parameters,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, arch: &Architecture) -> Self {
        Self {
            kind,
            m: Parameters::zeros(arch),
            v: Parameters::zeros(arch),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Parameters, grads: &Parameters, lr: f64) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_data() -> Dataset {
        // y = 2 x1 - x2 on a small grid
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let (a, b) = (i as f64 / 9.0, j as f64 / 9.0 - 0.5);
                x.push(vec![a, b]);
                y.push(vec![2.0 * a - b]);
            }
        }
        Dataset::new(vec!["x1".into(), "x2".into()], vec!["y".into()], x, y).unwrap()
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { epochs: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pinball_level_count_must_match_heads() {
        let cfg = TrainConfig {
            epochs: 1,
            loss: Loss::Pinball(vec![0.1, 0.9]),
            ..Default::default()
        };
        assert!(train(&linear_data(), &cfg).is_err());
    }

    #[test]
    fn divergence_reports_epoch() {
        let cfg = TrainConfig {
            hidden_layers: vec![],
            dropout_rate: 0.0,
            optimizer: Optimizer::Sgd,
            learning_rate: 1e200,
            epochs: 50,
            ..Default::default()
        };
        let err = train(&linear_data(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Training { .. }), "{err}");
    }

    #[test]
    fn model_json_round_trip() {
        let cfg = TrainConfig { epochs: 2, hidden_layers: vec![4], ..Default::default() };
        let data = linear_data();
        let model = train(&data, &cfg).unwrap().with_summary(&data, 10);
        let back = TrainedSurrogate::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.data_summary.unwrap().sample_x.len(), 10);
    }
}
