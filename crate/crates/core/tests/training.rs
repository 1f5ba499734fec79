mod common;

use common::rng;
use protoforge::datakit::{
    draw_and_split, fit_standardizer, ingest_csv, train, Dataset, Optimizer, SplitPlan,
    TrainConfig,
};
use protoforge::netcore::Loss;
use rand::Rng;
use rand_distr::{Distribution, Exp};

fn concrete() -> Dataset {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/concrete.csv");
    ingest_csv(path, &["compressive_strength"]).unwrap().dataset
}

fn ds(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, targets: &[&str]) -> Dataset {
    let d = x[0].len();
    Dataset::new(
        (1..=d).map(|j| format!("x{j}")).collect(),
        targets.iter().map(|s| s.to_string()).collect(),
        x,
        y,
    )
    .unwrap()
}

/// Solves the 2x2 normal equations for centered data.
fn least_squares_2(x: &[Vec<f64>], y: &[f64]) -> [f64; 2] {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, &t) in x.iter().zip(y) {
        a11 += r[0] * r[0];
        a12 += r[0] * r[1];
        a22 += r[1] * r[1];
        b1 += r[0] * t;
        b2 += r[1] * t;
    }
    let det = a11 * a22 - a12 * a12;
    [(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det]
}

#[test]
fn linear_data_is_fit_exactly() {
    let mut r = rng(1);
    let x: Vec<Vec<f64>> = (0..200)
        .map(|_| vec![r.gen_range(-2.0..2.0), r.gen_range(0.0..5.0)])
        .collect();
    let y: Vec<Vec<f64>> = x.iter().map(|v| vec![2.0 * v[0] - v[1]]).collect();
    let data = ds(x, y, &["y"]);
    let cfg = TrainConfig {
        hidden_layers: vec![],
        dropout_rate: 0.0,
        epochs: 300,
        batch_size: 16,
        learning_rate: 0.05,
        optimizer: Optimizer::Sgd,
        ..TrainConfig::default()
    };
    let model = train(&data, &cfg).unwrap();

    let st = fit_standardizer(&data).unwrap();
    let z = st.transform(&data);
    let zy: Vec<f64> = z.y.iter().map(|v| v[0]).collect();
    let beta = least_squares_2(&z.x, &zy);
    let w = &model.network.params.layers[0].w;
    assert!((w[0] - beta[0]).abs() < 1e-3, "{w:?} vs {beta:?}");
    assert!((w[1] - beta[1]).abs() < 1e-3, "{w:?} vs {beta:?}");

    let mse = data
        .x
        .iter()
        .zip(&z.y)
        .map(|(x, t)| {
            let p = model.predict_standardized(&st.transform_x(x)).unwrap()[0];
            (p - t[0]).powi(2)
        })
        .sum::<f64>()
        / data.len() as f64;
    assert!(mse < 1e-6, "training mse {mse}");
}

#[test]
fn pinball_heads_bracket_the_mean() {
    // y = x + Exp(1) noise: conditional mean x + 1, conditional
    // 10% / 90% quantiles x + q(0.1), x + q(0.9)
    let mut r = rng(2);
    let exp = Exp::new(1.0).unwrap();
    let n = 5000;
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![r.gen_range(-1.0..1.0)]).collect();
    let noise: Vec<f64> = (0..n).map(|_| exp.sample(&mut r)).collect();
    let y: Vec<Vec<f64>> = x
        .iter()
        .zip(&noise)
        .map(|(x, e)| vec![x[0] + e, x[0] + e])
        .collect();
    let mut sorted = noise.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * n as f64) as usize).min(n - 1)];
    let (q10, q90) = (q(0.1), q(0.9));

    let data = ds(x, y, &["lo", "hi"]);
    let cfg = TrainConfig {
        hidden_layers: vec![16],
        dropout_rate: 0.0,
        epochs: 300,
        learning_rate: 1e-3,
        loss: Loss::Pinball(vec![0.1, 0.9]),
        seed: 3,
        ..TrainConfig::default()
    };
    let model = train(&data, &cfg).unwrap();
    for probe in [-0.8, -0.3, 0.0, 0.4, 0.9] {
        let p = model.predict(&[probe]).unwrap();
        let mean = probe + 1.0;
        assert!(p[0] < mean && mean < p[1], "probe {probe}: {p:?}");
        assert!((p[0] - (probe + q10)).abs() < 0.15, "lower {} vs {}", p[0], probe + q10);
        assert!((p[1] - (probe + q90)).abs() < 0.15, "upper {} vs {}", p[1], probe + q90);
    }
}

#[test]
fn concrete_training_reduces_loss() {
    let data = concrete();
    assert_eq!(data.len(), 1030);
    let s = draw_and_split(&data, &SplitPlan::benchmark(4)).unwrap();
    let model = train(&s.train, &TrainConfig::default()).unwrap();
    let h = &model.loss_history;
    assert_eq!(h.len(), 300);
    assert!(h.iter().all(|v| v.is_finite()));
    assert!(h[h.len() - 1] < h[0]);
    let window = |k: usize| h[k..k + 10].iter().sum::<f64>();
    assert!(window(290) < window(0));
}

#[test]
fn training_is_bitwise_reproducible() {
    let data = concrete().subset(&(0..200).collect::<Vec<_>>());
    let cfg = TrainConfig {
        epochs: 20,
        seed: 17,
        ..TrainConfig::default()
    };
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.network.params, b.network.params);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = train(&data, &TrainConfig { seed: 18, ..cfg }).unwrap();
    assert_ne!(a.network.params, c.network.params);
}

#[test]
fn standardizer_sees_only_the_training_split() {
    let data = concrete();
    let plan = SplitPlan::benchmark(9);
    let s = draw_and_split(&data, &plan).unwrap();
    let mut poisoned = data.clone();
    for &i in s.cal_idx.iter().chain(&s.test_idx) {
        for v in poisoned.x[i].iter_mut().chain(poisoned.y[i].iter_mut()) {
            *v = *v * 100.0 + 1e6;
        }
    }
    let p = draw_and_split(&poisoned, &plan).unwrap();
    assert_eq!(p.train_idx, s.train_idx);
    assert_eq!(fit_standardizer(&p.train).unwrap(), fit_standardizer(&s.train).unwrap());
    assert_ne!(p.test.x, s.test.x);
}
