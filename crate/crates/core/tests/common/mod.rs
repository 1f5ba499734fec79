//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use protoforge::netcore::{Activation, Architecture, DenseLayer, Network, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain nested-loop deterministic forward, written without the library's
/// tape. Returns the output and every hidden pre-activation.
pub fn oracle_forward(arch: &Architecture, p: &Parameters, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = x.to_vec();
    let mut pre_all = Vec::new();
    let n = p.layers.len();
    for (l, layer) in p.layers.iter().enumerate() {
        let fan_in = a.len();
        let fan_out = layer.b.len();
        let mut z = vec![0.0; fan_out];
        for i in 0..fan_out {
            let mut s = layer.b[i];
            for j in 0..fan_in {
                s += layer.w[i * fan_in + j] * a[j];
            }
            z[i] = s;
        }
        if l + 1 < n {
            pre_all.extend_from_slice(&z);
            a = z
                .iter()
                .map(|&v| match arch.activation {
                    Activation::Relu => {
                        if v > 0.0 {
                            v
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => v.tanh(),
                })
                .collect();
        } else {
            a = z;
        }
    }
    (a, pre_all)
}

/// Fourth-order central difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let at = |d: f64| {
        let mut y = x.to_vec();
        y[i] += d;
        f(&y)
    };
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

pub fn flatten(p: &Parameters) -> Vec<f64> {
    p.layers
        .iter()
        .flat_map(|l| l.w.iter().chain(&l.b).copied())
        .collect()
}

pub fn unflatten(arch: &Architecture, v: &[f64]) -> Parameters {
    let mut k = 0;
    let layers = arch
        .layer_shapes()
        .into_iter()
        .map(|(out, inp)| {
            let w = v[k..k + out * inp].to_vec();
            k += out * inp;
            let b = v[k..k + out].to_vec();
            k += out;
            DenseLayer { w, b }
        })
        .collect();
    Parameters { layers }
}

/// Random small net (<= 3 hidden layers, <= 16 units) with nonzero biases.
pub fn random_net(seed: u64, activation: Activation) -> Network {
    let mut r = rng(seed);
    let depth = r.gen_range(0..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| r.gen_range(1..=16)).collect();
    let arch = Architecture::new(
        r.gen_range(1..=5),
        r.gen_range(1..=3),
        hidden,
        activation,
        0.1,
    )
    .unwrap();
    let mut net = Network::new(arch, seed).unwrap();
    for b in net.params.layers.iter_mut().flat_map(|l| l.b.iter_mut()) {
        *b = r.gen_range(-0.5..0.5);
    }
    net
}

/// Random input for `net`; for relu nets, redrawn until every hidden
/// pre-activation is at least `margin` away from the kink.
pub fn input_away_from_kinks(net: &Network, seed: u64, margin: f64) -> Option<Vec<f64>> {
    let mut r = rng(seed ^ 0xA5A5);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..net.arch.input_dim).map(|_| r.gen_range(-1.5..1.5)).collect();
        let (_, pre) = oracle_forward(&net.arch, &net.params, &x);
        if net.arch.activation == Activation::Tanh || pre.iter().all(|z| z.abs() > margin) {
            return Some(x);
        }
    }
    None
}

/// Max relative error of the library's parameter and input gradients
/// against finite differences of the oracle forward.
pub fn gradient_check(net: &Network, x: &[f64], seed: u64) -> f64 {
    use protoforge::netcore::{backward_params, ForwardMode, Loss};
    let mut r = rng(seed ^ 0x5A5A);
    let m = net.arch.output_dim;
    let y: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
    let cot: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
    let arch = &net.arch;
    let h = 1e-4;

    // parameter gradient of the mean squared error over heads
    let (_, g) = backward_params(x, &y, &net.params, arch, &Loss::Mse, ForwardMode::Deterministic)
        .unwrap();
    let analytic = flatten(&g);
    let theta = flatten(&net.params);
    let loss = |t: &[f64]| {
        let (out, _) = oracle_forward(arch, &unflatten(arch, t), x);
        out.iter().zip(&y).map(|(o, y)| (o - y).powi(2)).sum::<f64>() / m as f64
    };
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        worst = worst.max(rel_err(analytic[i], central_diff(&loss, &theta, i, h)));
    }

    // input vector-Jacobian product
    let analytic = net.backward_input(x, &cot).unwrap();
    let proj = |z: &[f64]| {
        let (out, _) = oracle_forward(arch, &net.params, z);
        out.iter().zip(&cot).map(|(o, c)| o * c).sum::<f64>()
    };
    for i in 0..x.len() {
        worst = worst.max(rel_err(analytic[i], central_diff(&proj, x, i, h)));
    }
    worst
}

/// Brute-force nested level: scan `t` over {0.001, ..., 0.999} and keep the
/// largest whose calibration coverage reaches
/// `ceil((n + 1)(1 - alpha)) / n`. Returns the grid index `1..=999`, or 0
/// when no grid level qualifies.
pub fn grid_scan_index(
    samples: &[protoforge::uq::PredictiveSamples],
    ys: &[f64],
    alpha: f64,
) -> usize {
    let n = ys.len();
    let need = ((n + 1) as f64 * (1.0 - alpha) - 1e-9).ceil() as usize;
    let mut best = 0;
    for k in 1..=999usize {
        let t = k as f64 / 1000.0;
        let covered = samples
            .iter()
            .zip(ys)
            .filter(|(s, &y)| {
                let (lo, hi) = (s.quantile(t / 2.0), s.quantile(1.0 - t / 2.0));
                lo <= y && y <= hi
            })
            .count();
        if covered >= need {
            best = k;
        }
    }
    best
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Population standard deviation.
pub fn pop_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

pub const BOWL_CENTER: [f64; 2] = [0.3, -0.2];

/// Surrogate trained on `y = -||x - c||^2` over `[-1, 1]^2`. A smooth
/// activation without dropout keeps the fitted peak close to `c`; a relu
/// fit puts the peak on a vertex of its piecewise-linear surface.
pub fn bowl_surrogate(seed: u64) -> protoforge::datakit::TrainedSurrogate {
    use protoforge::datakit::{synthetic::Generator, train, TrainConfig};
    let data = Generator::NegQuadratic {
        n_rows: 500,
        center: BOWL_CENTER.to_vec(),
        half_width: 1.0,
        seed,
    }
    .generate();
    let cfg = TrainConfig {
        seed,
        activation: protoforge::netcore::Activation::Tanh,
        dropout_rate: 0.0,
        ..TrainConfig::default()
    };
    train(&data, &cfg).unwrap()
}

/// Raw-unit search for the bowl's maximum with a goal far above it.
pub fn bowl_search(
    s: &protoforge::datakit::TrainedSurrogate,
    bounds: &[(f64, f64)],
    seed: u64,
) -> protoforge::pgdsearch::SearchResult {
    use protoforge::pgdsearch::*;
    let mut spec = SearchSpec::new(
        SearchBox::from_pairs(bounds).unwrap(),
        Mask::all(2),
        TargetSpec::goals(&[10.0]).unwrap(),
    );
    spec.eta = 0.02;
    spec.n_iters = 300;
    spec.n_restarts = 4;
    spec.seed = seed;
    multi_start_search(&RawScale(s), &spec).unwrap()
}

/// Distance to the bowl center in the surrogate's standardized feature
/// units.
pub fn standardized_distance(s: &protoforge::datakit::TrainedSurrogate, x: &[f64]) -> f64 {
    x.iter()
        .zip(BOWL_CENTER)
        .zip(&s.standardizer.x_std)
        .map(|((x, c), sd)| ((x - c) / sd).powi(2))
        .sum::<f64>()
        .sqrt()
}
