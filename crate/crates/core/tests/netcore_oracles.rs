mod common;

use common::*;
use protoforge::datakit::TrainedSurrogate;
use protoforge::netcore::{Activation, Architecture, DenseLayer, ForwardMode, Network, Parameters};
use protoforge::uq::mc_predict;
use proptest::prelude::*;

#[test]
fn forward_matches_oracle() {
    for seed in 0..50 {
        for act in [Activation::Relu, Activation::Tanh] {
            let net = random_net(seed, act);
            let x: Vec<f64> = (0..net.arch.input_dim).map(|i| 0.3 * i as f64 - 0.4).collect();
            let got = net.forward(&x, ForwardMode::Deterministic).unwrap();
            let (want, _) = oracle_forward(&net.arch, &net.params, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>(), tanh in any::<bool>()) {
        let act = if tanh { Activation::Tanh } else { Activation::Relu };
        let net = random_net(seed, act);
        if let Some(x) = input_away_from_kinks(&net, seed, 0.05) {
            let worst = gradient_check(&net, &x, seed);
            prop_assert!(worst < 1e-4, "max relative error {worst}");
        }
    }
}

#[test]
fn inverted_dropout_is_unbiased() {
    let arch = Architecture::new(3, 1, vec![16], Activation::Tanh, 0.3).unwrap();
    let net = Network::new(arch, 11).unwrap();
    let x = [0.4, -0.7, 1.1];
    let det = net.forward(&x, ForwardMode::Deterministic).unwrap()[0];
    let n = 10_000;
    let draws: Vec<f64> = (0..n)
        .map(|k| net.forward(&x, ForwardMode::mc_pass(5, k)).unwrap()[0])
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = pop_std(&draws);
    let se = sd / (n as f64).sqrt();
    assert!((mean - det).abs() < 3.0 * se, "mean {mean} det {det} se {se}");
}

#[test]
fn single_unit_dropout_has_two_outcomes() {
    // one hidden unit, p = 0.5: the output is either the bias b2 (unit
    // dropped) or b2 + 2 * w2 * relu(w1 . x + b1) (unit kept and rescaled)
    let arch = Architecture::new(2, 1, vec![1], Activation::Relu, 0.5).unwrap();
    let (w1, b1, w2, b2) = ([0.8, -0.3], 0.2, 1.5, -0.4);
    let params = Parameters {
        layers: vec![
            DenseLayer { w: w1.to_vec(), b: vec![b1] },
            DenseLayer { w: vec![w2], b: vec![b2] },
        ],
    };
    let surrogate = TrainedSurrogate::from_network(Network::from_parts(arch, params).unwrap());
    let x = [1.0, 0.5];
    let hidden = (w1[0] * x[0] + w1[1] * x[1] + b1).max(0.0);
    let dropped = b2;
    let kept = b2 + 2.0 * w2 * hidden;

    let n = 10_000;
    let s = &mc_predict(&x, &surrogate, n, 99).unwrap()[0];
    let n_dropped = s.values().iter().filter(|&&v| v == dropped).count();
    let n_kept = s.values().iter().filter(|&&v| (v - kept).abs() < 1e-12).count();
    assert_eq!(n_dropped + n_kept, n);
    let freq = n_kept as f64 / n as f64;
    let sigma = (0.25 / n as f64).sqrt();
    assert!((freq - 0.5).abs() < 3.0 * sigma, "kept frequency {freq}");
}

#[test]
fn mc_samples_are_seeded() {
    let net = random_net(3, Activation::Relu);
    let s = TrainedSurrogate::from_network(net);
    let x = vec![0.1; s.input_dim()];
    assert_eq!(mc_predict(&x, &s, 50, 7).unwrap(), mc_predict(&x, &s, 50, 7).unwrap());
    assert_ne!(mc_predict(&x, &s, 50, 7).unwrap(), mc_predict(&x, &s, 50, 8).unwrap());
}

#[test]
fn zero_dropout_samples_equal_the_point_prediction() {
    let arch = Architecture::new(2, 1, vec![8], Activation::Tanh, 0.0).unwrap();
    let s = TrainedSurrogate::from_network(Network::new(arch, 1).unwrap());
    let x = [0.2, 0.9];
    let det = s.network.forward(&x, ForwardMode::Deterministic).unwrap()[0];
    let samples = &mc_predict(&x, &s, 20, 3).unwrap()[0];
    assert!(samples.values().iter().all(|&v| v == det));
    assert!(samples.warning.is_some());
}
