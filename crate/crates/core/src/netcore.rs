//! Dense multilayer perceptron with inverted dropout and exact reverse-mode
//! gradients.
//!
//! The network is the fixed family `affine -> activation -> dropout` repeated
//! for every hidden layer, followed by an affine output head. Two gradient
//! kinds are supported: with respect to the parameters (training) and with
//! respect to the input vector (design search).
//!
//! Dropout is inverted: survivors are scaled by `1 / (1 - p)` when sampling,
//! so the deterministic pass needs no rescaling. Masks are counter-based,
//! keyed by `(seed, layer, unit)`, which makes a stochastic pass a pure
//! function of `(x, params, seed)`.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    /// The relu derivative at exactly 0 is 0.
    #[inline]
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: Vec<usize>,
        activation: Activation,
        dropout_rate: f64,
    ) -> Result<Self> {
        let arch = Self {
            input_dim,
            output_dim,
            hidden_layers,
            activation,
            dropout_rate,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input and output dims must be >= 1".into()));
        }
        if let Some(i) = self.hidden_layers.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("hidden layer {i} has width 0")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every affine layer, output head last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_layers {
            shapes.push((w, fan_in));
            fan_in = w;
        }
        shapes.push((self.output_dim, fan_in));
        shapes
    }

    pub fn n_layers(&self) -> usize {
        self.hidden_layers.len() + 1
    }
}

/// One affine layer. `w` is row-major with shape `(fan_out, fan_in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Weights and biases of every layer. Also used as the container for
/// parameter gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<DenseLayer>,
}

impl Parameters {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = seed::rng(seed, &[seed::TAG_INIT]);
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                let limit = (6.0 / (inp + out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                DenseLayer {
                    w: (0..out * inp).map(|_| dist.sample(&mut rng)).collect(),
                    b: vec![0.0; out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| DenseLayer {
                w: vec![0.0; out * inp],
                b: vec![0.0; out],
            })
            .collect();
        Self { layers }
    }

    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        let shapes = arch.layer_shapes();
        check_len("parameter layer count", shapes.len(), self.layers.len())?;
        for (layer, &(out, inp)) in self.layers.iter().zip(&shapes) {
            check_len("weight matrix", out * inp, layer.w.len())?;
            check_len("bias vector", out, layer.b.len())?;
        }
        if self.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("parameters"));
        }
        Ok(())
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat iteration order: layer by layer, weights then biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn fill(&mut self, value: f64) {
        self.iter_mut().for_each(|v| *v = value);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForwardMode {
    Deterministic,
    Stochastic { seed: u64 },
}

impl ForwardMode {
    /// Mode for the `pass`-th Monte Carlo forward pass keyed by `seed`.
    pub fn mc_pass(seed: u64, pass: u64) -> Self {
        ForwardMode::Stochastic {
            seed: seed::derive(seed, &[seed::TAG_MC_PASS, pass]),
        }
    }
}

/// Per-example training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Squared residual averaged over output heads.
    Mse,
    /// Pinball loss summed over heads, one quantile level per head.
    Pinball(Vec<f64>),
}

impl Loss {
    /// Loss value and its gradient with respect to the prediction.
    pub fn eval(&self, pred: &[f64], target: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_len("loss target", pred.len(), target.len())?;
        match self {
            Loss::Mse => {
                let m = pred.len() as f64;
                let mut total = 0.0;
                for ((g, &p), &y) in grad.iter_mut().zip(pred).zip(target) {
                    let r = p - y;
                    total += r * r;
                    *g = 2.0 * r / m;
                }
                Ok(total / m)
            }
            Loss::Pinball(levels) => {
                check_len("pinball levels", pred.len(), levels.len())?;
                let mut total = 0.0;
                for (((g, &p), &y), &tau) in grad.iter_mut().zip(pred).zip(target).zip(levels) {
                    let u = y - p;
                    if u > 0.0 {
                        total += tau * u;
                        *g = -tau;
                    } else {
                        // zero residual takes the (tau - 1) branch
                        total += (tau - 1.0) * u;
                        *g = 1.0 - tau;
                    }
                }
                Ok(total)
            }
        }
    }
}

/// Reusable activation storage for one forward/backward pass.
///
/// `acts[0]` is the input, `acts[l + 1]` the output of layer `l` (after
/// activation and dropout for hidden layers). `pre[l]` holds the
/// pre-activations and `keep[l]` the dropout multiplier of hidden layer `l`.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    keep: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Tape {
    pub fn new(arch: &Architecture) -> Self {
        let shapes = arch.layer_shapes();
        let mut acts = vec![vec![0.0; arch.input_dim]];
        acts.extend(shapes.iter().map(|&(out, _)| vec![0.0; out]));
        let hidden: Vec<Vec<f64>> = arch.hidden_layers.iter().map(|&w| vec![0.0; w]).collect();
        let widest = shapes
            .iter()
            .map(|&(o, i)| o.max(i))
            .max()
            .unwrap_or(arch.input_dim);
        Self {
            acts,
            pre: hidden.clone(),
            keep: hidden,
            delta: Vec::with_capacity(widest),
            delta_prev: Vec::with_capacity(widest),
        }
    }

    /// Output of the last forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn forward(
        &mut self,
        x: &[f64],
        params: &Parameters,
        arch: &Architecture,
        mode: ForwardMode,
    ) -> Result<&[f64]> {
        check_len("input", arch.input_dim, x.len())?;
        check_len("parameter layer count", arch.n_layers(), params.layers.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("input"));
        }
        let n_hidden = arch.hidden_layers.len();
        let p = arch.dropout_rate;
        let survivor_scale = 1.0 / (1.0 - p);
        self.acts[0].copy_from_slice(x);

        for (l, layer) in params.layers.iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            let fan_in = input.len();
            check_len("weight matrix", out.len() * fan_in, layer.w.len())?;
            for (j, o) in out.iter_mut().enumerate() {
                let row = &layer.w[j * fan_in..(j + 1) * fan_in];
                *o = layer.b[j] + dot(row, input);
            }
            if l < n_hidden {
                let pre = &mut self.pre[l];
                let keep = &mut self.keep[l];
                pre.copy_from_slice(out);
                match mode {
                    ForwardMode::Stochastic { seed } if p > 0.0 => {
                        let layer_key = seed::derive(seed, &[l as u64]);
                        for (j, k) in keep.iter_mut().enumerate() {
                            let u = seed::unit_f64(layer_key.wrapping_add(j as u64));
                            *k = if u < p { 0.0 } else { survivor_scale };
                        }
                    }
                    _ => keep.fill(1.0),
                }
                for ((o, &z), &k) in out.iter_mut().zip(pre.iter()).zip(keep.iter()) {
                    *o = arch.activation.apply(z) * k;
                }
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: l,
                    pass: "forward",
                });
            }
        }
        Ok(self.output())
    }

    /// Back-propagates `d_output` through the last forward pass.
    ///
    /// Parameter gradients are accumulated into `grads` when given; the
    /// gradient with respect to the input is written to `d_input` when given.
    pub fn backward(
        &mut self,
        params: &Parameters,
        arch: &Architecture,
        d_output: &[f64],
        mut grads: Option<&mut Parameters>,
        d_input: Option<&mut [f64]>,
    ) -> Result<()> {
        check_len("output gradient", arch.output_dim, d_output.len())?;
        let n_layers = params.layers.len();
        let need_input = d_input.is_some();
        self.delta.clear();
        self.delta.extend_from_slice(d_output);

        for l in (0..n_layers).rev() {
            let layer = &params.layers[l];
            let input = &self.acts[l];
            let fan_in = input.len();

            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[l];
                for (j, &d) in self.delta.iter().enumerate() {
                    gl.b[j] += d;
                    if d != 0.0 {
                        let row = &mut gl.w[j * fan_in..(j + 1) * fan_in];
                        for (gw, &a) in row.iter_mut().zip(input) {
                            *gw += d * a;
                        }
                    }
                }
            }

            if l == 0 && !need_input {
                break;
            }

            self.delta_prev.clear();
            self.delta_prev.resize(fan_in, 0.0);
            for (j, &d) in self.delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &layer.w[j * fan_in..(j + 1) * fan_in];
                    for (dp, &w) in self.delta_prev.iter_mut().zip(row) {
                        *dp += w * d;
                    }
                }
            }
            if l > 0 {
                // through dropout and activation of hidden layer l - 1
                let h = l - 1;
                for (((dp, &z), &k), &a) in self
                    .delta_prev
                    .iter_mut()
                    .zip(&self.pre[h])
                    .zip(&self.keep[h])
                    .zip(&self.acts[l])
                {
                    if k == 0.0 {
                        *dp = 0.0;
                    } else {
                        *dp *= k * arch.activation.derivative(z, a / k);
                    }
                }
            }
            if self.delta_prev.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: l,
                    pass: "backward",
                });
            }
            std::mem::swap(&mut self.delta, &mut self.delta_prev);
        }

        if let Some(out) = d_input {
            check_len("input gradient", arch.input_dim, out.len())?;
            out.copy_from_slice(&self.delta);
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn forward(
    x: &[f64],
    params: &Parameters,
    arch: &Architecture,
    mode: ForwardMode,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new(arch);
    tape.forward(x, params, arch, mode).map(<[f64]>::to_vec)
}

/// Loss value and exact parameter gradient for one example.
pub fn backward_params(
    x: &[f64],
    y_true: &[f64],
    params: &Parameters,
    arch: &Architecture,
    loss: &Loss,
    mode: ForwardMode,
) -> Result<(f64, Parameters)> {
    let mut tape = Tape::new(arch);
    let mut d_out = vec![0.0; arch.output_dim];
    let pred = tape.forward(x, params, arch, mode)?;
    let value = loss.eval(pred, y_true, &mut d_out)?;
    let mut grads = Parameters::zeros(arch);
    tape.backward(params, arch, &d_out, Some(&mut grads), None)?;
    Ok((value, grads))
}

/// Vector-Jacobian product `J(x)^T * head_residuals` of the deterministic
/// network at `x`.
pub fn backward_input(
    x: &[f64],
    params: &Parameters,
    arch: &Architecture,
    head_residuals: &[f64],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new(arch);
    tape.forward(x, params, arch, ForwardMode::Deterministic)?;
    let mut grad = vec![0.0; arch.input_dim];
    tape.backward(params, arch, head_residuals, None, Some(&mut grad))?;
    Ok(grad)
}

/// Architecture and parameters bundled together; serializes as
/// `{arch, layers: [{w, b}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub arch: Architecture,
    #[serde(flatten)]
    pub params: Parameters,
}

impl Network {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = Parameters::init(&arch, seed);
        Ok(Self { arch, params })
    }

    pub fn from_parts(arch: Architecture, params: Parameters) -> Result<Self> {
        arch.validate()?;
        params.validate(&arch)?;
        Ok(Self { arch, params })
    }

    pub fn forward(&self, x: &[f64], mode: ForwardMode) -> Result<Vec<f64>> {
        forward(x, &self.params, &self.arch, mode)
    }

    pub fn backward_input(&self, x: &[f64], head_residuals: &[f64]) -> Result<Vec<f64>> {
        backward_input(x, &self.params, &self.arch, head_residuals)
    }

    pub fn tape(&self) -> Tape {
        Tape::new(&self.arch)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(s)?;
        net.arch.validate()?;
        net.params.validate(&net.arch)?;
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine() -> Network {
        let arch = Architecture::new(2, 1, vec![], Activation::Relu, 0.0).unwrap();
        let params = Parameters {
            layers: vec![DenseLayer {
                w: vec![2.0, 0.0],
                b: vec![1.0],
            }],
        };
        Network::from_parts(arch, params).unwrap()
    }

    #[test]
    fn affine_forward() {
        let net = affine();
        assert_eq!(net.forward(&[1.0, 0.0], ForwardMode::Deterministic).unwrap(), vec![3.0]);
    }

    #[test]
    fn affine_input_gradient_is_jacobian_row() {
        let net = affine();
        assert_eq!(net.backward_input(&[0.3, -7.0], &[1.0]).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let net = affine();
        let (loss, g) = backward_params(
            &[1.0, 0.0],
            &[3.0],
            &net.params,
            &net.arch,
            &Loss::Mse,
            ForwardMode::Deterministic,
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pinball_median_is_half_abs_subgradient() {
        let loss = Loss::Pinball(vec![0.5]);
        let mut g = [0.0];
        // prediction below target
        assert_eq!(loss.eval(&[1.0], &[3.0], &mut g).unwrap(), 1.0);
        assert_eq!(g[0], -0.5);
        // prediction above target
        assert_eq!(loss.eval(&[4.0], &[3.0], &mut g).unwrap(), 0.5);
        assert_eq!(g[0], 0.5);
        // zero residual uses the (tau - 1) branch
        assert_eq!(loss.eval(&[3.0], &[3.0], &mut g).unwrap(), 0.0);
        assert_eq!(g[0], 0.5);
    }

    #[test]
    fn pinball_requires_one_level_per_head() {
        let loss = Loss::Pinball(vec![0.1, 0.9]);
        let mut g = [0.0];
        assert!(loss.eval(&[1.0], &[1.0], &mut g).is_err());
    }

    #[test]
    fn hand_set_relu_net_matches_straight_line_arithmetic() {
        // 2 -> 3 -> 1 relu
        let arch = Architecture::new(2, 1, vec![3], Activation::Relu, 0.0).unwrap();
        let w1 = [0.5, -1.0, 1.5, 0.25, -0.75, -0.5];
        let b1 = [0.1, -0.2, 0.3];
        let w2 = [1.0, -2.0, 0.5];
        let b2 = [0.05];
        let params = Parameters {
            layers: vec![
                DenseLayer { w: w1.to_vec(), b: b1.to_vec() },
                DenseLayer { w: w2.to_vec(), b: b2.to_vec() },
            ],
        };
        let x = [0.8, -0.4];
        let h0 = (0.5 * 0.8 + -1.0 * -0.4 + 0.1f64).max(0.0); // 0.9
        let h1 = (1.5 * 0.8 + 0.25 * -0.4 - 0.2f64).max(0.0); // 0.9
        let h2 = (-0.75 * 0.8 + -0.5 * -0.4 + 0.3f64).max(0.0); // 0 (pre = -0.1)
        let expected = 1.0 * h0 - 2.0 * h1 + 0.5 * h2 + 0.05;
        let got = forward(&x, &params, &arch, ForwardMode::Deterministic).unwrap();
        assert!((got[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn relu_kink_uses_inactive_branch() {
        // hidden pre-activation is exactly 0 at x = 0
        let arch = Architecture::new(1, 1, vec![1], Activation::Relu, 0.0).unwrap();
        let params = Parameters {
            layers: vec![
                DenseLayer { w: vec![1.0], b: vec![0.0] },
                DenseLayer { w: vec![1.0], b: vec![0.0] },
            ],
        };
        let g = backward_input(&[0.0], &params, &arch, &[1.0]).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn zero_dropout_stochastic_equals_deterministic() {
        let arch = Architecture::new(3, 2, vec![8, 8], Activation::Tanh, 0.0).unwrap();
        let net = Network::new(arch, 3).unwrap();
        let x = [0.1, -0.2, 0.7];
        let det = net.forward(&x, ForwardMode::Deterministic).unwrap();
        for seed in 0..20 {
            assert_eq!(net.forward(&x, ForwardMode::Stochastic { seed }).unwrap(), det);
        }
    }

    #[test]
    fn stochastic_pass_is_reproducible() {
        let arch = Architecture::new(3, 1, vec![16], Activation::Relu, 0.3).unwrap();
        let net = Network::new(arch, 9).unwrap();
        let x = [0.5, 0.5, -1.0];
        let a = net.forward(&x, ForwardMode::Stochastic { seed: 42 }).unwrap();
        let b = net.forward(&x, ForwardMode::Stochastic { seed: 42 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_and_domain_errors() {
        let net = affine();
        assert!(matches!(
            net.forward(&[1.0], ForwardMode::Deterministic),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            net.forward(&[f64::NAN, 0.0], ForwardMode::Deterministic),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn overflow_reports_layer() {
        let arch = Architecture::new(1, 1, vec![1], Activation::Relu, 0.0).unwrap();
        let params = Parameters {
            layers: vec![
                DenseLayer { w: vec![1e300], b: vec![0.0] },
                DenseLayer { w: vec![1e300], b: vec![0.0] },
            ],
        };
        let err = forward(&[1e10], &params, &arch, ForwardMode::Deterministic).unwrap_err();
        assert!(matches!(err, Error::Numeric { layer: 0, .. }), "{err:?}");
    }

    #[test]
    fn architecture_rejects_bad_dropout_and_widths() {
        assert!(Architecture::new(2, 1, vec![4], Activation::Relu, 1.0).is_err());
        assert!(Architecture::new(2, 1, vec![0], Activation::Relu, 0.1).is_err());
        assert!(Architecture::new(0, 1, vec![], Activation::Relu, 0.1).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let arch = Architecture::new(4, 2, vec![5, 3], Activation::Tanh, 0.1).unwrap();
        let net = Network::new(arch, 77).unwrap();
        let json = net.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value.get("arch").is_some());
        assert!(value["layers"][0].get("w").is_some());
        assert_eq!(Network::from_json(&json).unwrap(), net);
    }
}
