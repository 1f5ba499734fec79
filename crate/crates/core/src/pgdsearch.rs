//! Masked, normalized, box-projected gradient descent over a surrogate's
//! inputs.
//!
//! The objective is `G(x) = sum_i w_i * |f_i(x) - t_i|` over the output heads.
//! Each iteration takes the gradient of `G`, zeroes the coordinates that are
//! held fixed, normalizes it to unit length, steps by `eta` and clamps back
//! into the box. Multi-start repeats this from seeded uniform draws inside the
//! box and keeps the lowest final loss.

use std::ops::ControlFlow;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::TrainedSurrogate;
use crate::error::{check_len, Error, Result};
use crate::netcore::{ForwardMode, Network};
use crate::seed;

/// Directions shorter than this are treated as a stationary point.
pub const ZERO_GRADIENT_NORM: f64 = 1e-12;

pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_ITERS: usize = 200;
pub const DEFAULT_RESTARTS: usize = 16;

/// A vector-valued function with vector-Jacobian products.
pub trait Differentiable: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `J(x)^T * cotangent`.
    fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>>;
}

impl Differentiable for Network {
    fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, ForwardMode::Deterministic)
    }

    fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        self.backward_input(x, cotangent)
    }
}

/// On the standardized scale: standardized features in, standardized
/// targets out.
impl Differentiable for TrainedSurrogate {
    fn input_dim(&self) -> usize {
        self.network.arch.input_dim
    }

    fn output_dim(&self) -> usize {
        self.network.arch.output_dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.network.evaluate(x)
    }

    fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        self.network.vjp(x, cotangent)
    }
}

/// A surrogate viewed in raw feature and target units.
#[derive(Debug, Clone, Copy)]
pub struct RawScale<'a>(pub &'a TrainedSurrogate);

impl Differentiable for RawScale<'_> {
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.predict(x)
    }

    fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        let s = &self.0.standardizer;
        check_len("cotangent", self.output_dim(), cotangent.len())?;
        check_len("feature vector", self.input_dim(), x.len())?;
        let c: Vec<f64> = cotangent.iter().zip(&s.y_std).map(|(c, sd)| c * sd).collect();
        let g = self.0.network.vjp(&s.transform_x(x), &c)?;
        Ok(g.iter().zip(&s.x_std).map(|(g, sd)| g / sd).collect())
    }
}

/// Axis-aligned feasible region `[l_1, u_1] x ... x [l_d, u_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::field("bounds", "box must have at least one coordinate"));
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::field(format!("bounds[{i}]"), "bounds must be finite"));
            }
            if l > u {
                return Err(Error::InfeasibleBox {
                    index: i,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.lower.iter().copied().zip(self.upper.iter().copied()).collect()
    }
}

/// Which coordinates the search may move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(Error::field("mask", "at least one feature must be free"));
        }
        Ok(Self(bits))
    }

    pub fn all(dim: usize) -> Self {
        Self(vec![true; dim])
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub goal: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// Goals and non-negative weights, one per output head.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec(Vec<Target>);

impl TargetSpec {
    pub fn new(targets: Vec<Target>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::field("targets", "need one target per output"));
        }
        for (i, t) in targets.iter().enumerate() {
            if !t.goal.is_finite() {
                return Err(Error::field(format!("targets[{i}].goal"), "must be finite"));
            }
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(Error::field(
                    format!("targets[{i}].weight"),
                    "must be finite and >= 0",
                ));
            }
        }
        if !targets.iter().any(|t| t.weight > 0.0) {
            return Err(Error::field("targets", "at least one weight must be > 0"));
        }
        Ok(Self(targets))
    }

    /// Equal unit weights.
    pub fn goals(goals: &[f64]) -> Result<Self> {
        Self::new(goals.iter().map(|&goal| Target { goal, weight: 1.0 }).collect())
    }

    pub fn entries(&self) -> &[Target] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub bounds: SearchBox,
    pub mask: Mask,
    pub targets: TargetSpec,
    pub eta: f64,
    pub n_iters: usize,
    pub n_restarts: usize,
    pub seed: u64,
    /// Values of the fixed coordinates for multi-start; defaults to the box
    /// center when absent.
    pub base_point: Option<Vec<f64>>,
}

impl SearchSpec {
    pub fn new(bounds: SearchBox, mask: Mask, targets: TargetSpec) -> Self {
        Self {
            bounds,
            mask,
            targets,
            eta: DEFAULT_ETA,
            n_iters: DEFAULT_ITERS,
            n_restarts: DEFAULT_RESTARTS,
            seed: 0,
            base_point: None,
        }
    }

    pub fn validate(&self, input_dim: usize, output_dim: usize) -> Result<()> {
        if self.bounds.dim() != input_dim {
            return Err(Error::field(
                "bounds",
                format!("expected {input_dim} ranges, got {}", self.bounds.dim()),
            ));
        }
        if self.mask.len() != input_dim {
            return Err(Error::field(
                "mask",
                format!("expected {input_dim} bits, got {}", self.mask.len()),
            ));
        }
        if self.targets.len() != output_dim {
            return Err(Error::field(
                "targets",
                format!("expected {output_dim} targets, got {}", self.targets.len()),
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::field("eta", "must be > 0"));
        }
        if self.n_iters == 0 {
            return Err(Error::field("iters", "must be >= 1"));
        }
        if self.n_restarts == 0 {
            return Err(Error::field("restarts", "must be >= 1"));
        }
        if let Some(base) = &self.base_point {
            if base.len() != input_dim {
                return Err(Error::field(
                    "base_point",
                    format!("expected {input_dim} values, got {}", base.len()),
                ));
            }
            if base.iter().any(|v| !v.is_finite()) {
                return Err(Error::field("base_point", "must be finite"));
            }
        }
        Ok(())
    }
}

/// Wire form of [`SearchSpec`]:
/// `{bounds: [[l, u], ...], mask: [0|1, ...], targets: [{goal, weight}],
/// eta, iters, restarts, seed, base_point}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub mask: Option<Vec<u8>>,
    pub targets: Vec<Target>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub base_point: Option<Vec<f64>>,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_iters() -> usize {
    DEFAULT_ITERS
}

fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

impl SearchRequest {
    /// Validates the request against the surrogate's dimensions.
    pub fn into_spec(self, input_dim: usize, output_dim: usize) -> Result<SearchSpec> {
        let bounds = SearchBox::from_pairs(&self.bounds)?;
        let bits = match self.mask {
            Some(bits) => {
                if let Some(i) = bits.iter().position(|&b| b > 1) {
                    return Err(Error::field(format!("mask[{i}]"), "must be 0 or 1"));
                }
                bits.into_iter().map(|b| b == 1).collect()
            }
            None => vec![true; bounds.dim()],
        };
        let spec = SearchSpec {
            bounds,
            mask: Mask::new(bits)?,
            targets: TargetSpec::new(self.targets)?,
            eta: self.eta,
            n_iters: self.iters,
            n_restarts: self.restarts,
            seed: self.seed,
            base_point: self.base_point,
        };
        spec.validate(input_dim, output_dim)?;
        Ok(spec)
    }
}

impl From<&SearchSpec> for SearchRequest {
    fn from(spec: &SearchSpec) -> Self {
        Self {
            bounds: spec.bounds.pairs(),
            mask: Some(spec.mask.bits().iter().map(|&b| b as u8).collect()),
            targets: spec.targets.entries().to_vec(),
            eta: spec.eta,
            iters: spec.n_iters,
            restarts: spec.n_restarts,
            seed: spec.seed,
            base_point: spec.base_point.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub x_start: Vec<f64>,
    pub x_final: Vec<f64>,
    pub loss_final: f64,
    /// The start point followed by one entry per completed iteration.
    pub trajectory: Vec<TrajectoryPoint>,
    pub restart_index: usize,
    /// True when the search stopped early at a zero masked gradient.
    pub stationary: bool,
}

/// Progress reported to an observer after every iteration.
#[derive(Debug, Clone, Copy)]
pub struct SearchProgress<'a> {
    pub restart: usize,
    pub iteration: usize,
    /// Iterations completed across all restarts so far.
    pub total_iterations: usize,
    pub point: &'a TrajectoryPoint,
}

/// Euclidean projection onto the box: coordinatewise clamp.
pub fn project(x: &[f64], bounds: &SearchBox) -> Vec<f64> {
    x.iter()
        .zip(bounds.lower())
        .zip(bounds.upper())
        .map(|((&v, &l), &u)| v.max(l).min(u))
        .collect()
}

fn weighted_residuals(out: &[f64], targets: &TargetSpec) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let cot = out
        .iter()
        .zip(targets.entries())
        .map(|(&f, t)| {
            let r = f - t.goal;
            loss += t.weight * r.abs();
            // sign(0) = 0
            let s = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            t.weight * s
        })
        .collect();
    (loss, cot)
}

/// `G(x) = sum_i w_i * |f_i(x) - t_i|` on the deterministic surrogate.
pub fn search_loss<S: Differentiable + ?Sized>(
    x: &[f64],
    surrogate: &S,
    targets: &TargetSpec,
) -> Result<f64> {
    let out = surrogate.evaluate(x)?;
    check_len("targets", out.len(), targets.len())?;
    Ok(weighted_residuals(&out, targets).0)
}

/// Loss at `x` and the normalized masked descent direction.
fn loss_and_direction<S: Differentiable + ?Sized>(
    x: &[f64],
    surrogate: &S,
    targets: &TargetSpec,
    mask: &Mask,
) -> Result<(f64, Vec<f64>)> {
    check_len("mask", x.len(), mask.len())?;
    let out = surrogate.evaluate(x)?;
    check_len("targets", out.len(), targets.len())?;
    let (loss, cot) = weighted_residuals(&out, targets);
    let mut g = surrogate.vjp(x, &cot)?;
    for (gi, &free) in g.iter_mut().zip(mask.bits()) {
        if !free {
            *gi = 0.0;
        }
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm >= ZERO_GRADIENT_NORM) {
        g.fill(0.0);
    } else {
        g.iter_mut().for_each(|v| *v /= norm);
    }
    Ok((loss, g))
}

/// `(grad G ⊙ m) / ||grad G ⊙ m||`, or the zero vector at a stationary point.
pub fn masked_step_direction<S: Differentiable + ?Sized>(
    x: &[f64],
    surrogate: &S,
    targets: &TargetSpec,
    mask: &Mask,
) -> Result<Vec<f64>> {
    loss_and_direction(x, surrogate, targets, mask).map(|(_, d)| d)
}

pub fn run_search<S: Differentiable + ?Sized>(
    surrogate: &S,
    spec: &SearchSpec,
    x0: &[f64],
) -> Result<SearchResult> {
    run_search_observed(surrogate, spec, x0, 0, 0, &mut |_| ControlFlow::Continue(()))
}

/// Single descent run. `x0` is projected into the box first; the observer
/// can cancel the run after any iteration.
pub fn run_search_observed<S: Differentiable + ?Sized>(
    surrogate: &S,
    spec: &SearchSpec,
    x0: &[f64],
    restart_index: usize,
    iterations_before: usize,
    observer: &mut dyn FnMut(SearchProgress<'_>) -> ControlFlow<()>,
) -> Result<SearchResult> {
    spec.validate(surrogate.input_dim(), surrogate.output_dim())?;
    check_len("start point", surrogate.input_dim(), x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("start point"));
    }
    let mut x = project(x0, &spec.bounds);
    let x_start = x.clone();
    let (mut loss, mut dir) = loss_and_direction(&x, surrogate, &spec.targets, &spec.mask)?;
    if !loss.is_finite() {
        return Err(Error::Search { iteration: 0 });
    }
    let mut trajectory = Vec::with_capacity(spec.n_iters + 1);
    trajectory.push(TrajectoryPoint {
        iteration: 0,
        x: x.clone(),
        loss,
    });
    let mut stationary = false;

    for it in 1..=spec.n_iters {
        if dir.iter().all(|&d| d == 0.0) {
            stationary = true;
            break;
        }
        let stepped: Vec<f64> = x.iter().zip(&dir).map(|(v, d)| v - spec.eta * d).collect();
        x = project(&stepped, &spec.bounds);
        (loss, dir) = loss_and_direction(&x, surrogate, &spec.targets, &spec.mask)
            .map_err(|_| Error::Search { iteration: it })?;
        if !loss.is_finite() {
            return Err(Error::Search { iteration: it });
        }
        trajectory.push(TrajectoryPoint {
            iteration: it,
            x: x.clone(),
            loss,
        });
        let progress = SearchProgress {
            restart: restart_index,
            iteration: it,
            total_iterations: iterations_before + it,
            point: trajectory.last().expect("just pushed"),
        };
        if observer(progress).is_break() {
            return Err(Error::Canceled { iteration: it });
        }
    }

    Ok(SearchResult {
        x_start,
        x_final: x,
        loss_final: loss,
        trajectory,
        restart_index,
        stationary,
    })
}

/// Start point of restart `r`: free coordinates uniform in their range,
/// fixed coordinates taken from the base point.
pub fn restart_start(spec: &SearchSpec, r: usize) -> Vec<f64> {
    let base = spec
        .base_point
        .clone()
        .unwrap_or_else(|| spec.bounds.center());
    let mut rng = seed::rng(spec.seed, &[seed::TAG_RESTART, r as u64]);
    base.iter()
        .enumerate()
        .map(|(i, &b)| {
            if spec.mask.is_free(i) {
                let (l, u) = (spec.bounds.lower()[i], spec.bounds.upper()[i]);
                if l < u {
                    rng.gen_range(l..=u)
                } else {
                    l
                }
            } else {
                b
            }
        })
        .collect()
}

fn keep_best(best: Option<SearchResult>, next: SearchResult) -> Option<SearchResult> {
    match best {
        Some(b) if b.loss_final <= next.loss_final => Some(b),
        _ => Some(next),
    }
}

/// Runs every restart (in parallel) and keeps the lowest final loss; ties go
/// to the lowest restart index.
pub fn multi_start_search<S: Differentiable + ?Sized>(
    surrogate: &S,
    spec: &SearchSpec,
) -> Result<SearchResult> {
    spec.validate(surrogate.input_dim(), surrogate.output_dim())?;
    let runs: Vec<Result<SearchResult>> = (0..spec.n_restarts)
        .into_par_iter()
        .map(|r| {
            let x0 = restart_start(spec, r);
            let mut res = run_search(surrogate, spec, &x0)?;
            res.restart_index = r;
            Ok(res)
        })
        .collect();
    let mut best = None;
    for run in runs {
        best = keep_best(best, run?);
    }
    Ok(best.expect("n_restarts >= 1"))
}

/// Sequential multi-start with progress reporting and cancellation. Produces
/// the same result as [`multi_start_search`].
pub fn multi_start_search_observed<S: Differentiable + ?Sized>(
    surrogate: &S,
    spec: &SearchSpec,
    observer: &mut dyn FnMut(SearchProgress<'_>) -> ControlFlow<()>,
) -> Result<SearchResult> {
    spec.validate(surrogate.input_dim(), surrogate.output_dim())?;
    let mut best = None;
    let mut done = 0;
    for r in 0..spec.n_restarts {
        let x0 = restart_start(spec, r);
        let res = run_search_observed(surrogate, spec, &x0, r, done, observer)?;
        done += res.trajectory.len() - 1;
        best = keep_best(best, res);
    }
    Ok(best.expect("n_restarts >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{Activation, Architecture, DenseLayer, Parameters};

    fn linear(w: Vec<f64>) -> Network {
        let d = w.len();
        let arch = Architecture::new(d, 1, vec![], Activation::Relu, 0.0).unwrap();
        Network::from_parts(
            arch,
            Parameters {
                layers: vec![DenseLayer { w, b: vec![0.0] }],
            },
        )
        .unwrap()
    }

    /// Two-output affine map `(x1 + x2, x1 - x2)`.
    fn two_heads() -> Network {
        let arch = Architecture::new(2, 2, vec![], Activation::Relu, 0.0).unwrap();
        Network::from_parts(
            arch,
            Parameters {
                layers: vec![DenseLayer {
                    w: vec![1.0, 1.0, 1.0, -1.0],
                    b: vec![0.0, 0.0],
                }],
            },
        )
        .unwrap()
    }

    fn unit_box(d: usize) -> SearchBox {
        SearchBox::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn project_clamps() {
        assert_eq!(project(&[1.5, -0.2], &unit_box(2)), vec![1.0, 0.0]);
        assert_eq!(project(&[0.25, 0.75], &unit_box(2)), vec![0.25, 0.75]);
    }

    #[test]
    fn infeasible_box() {
        assert!(matches!(
            SearchBox::new(vec![0.0, 2.0], vec![1.0, 1.0]),
            Err(Error::InfeasibleBox { index: 1, .. })
        ));
    }

    #[test]
    fn mask_needs_a_free_feature() {
        assert!(Mask::new(vec![false, false]).is_err());
    }

    #[test]
    fn target_weights() {
        assert!(TargetSpec::new(vec![Target { goal: 0.0, weight: 0.0 }]).is_err());
        assert!(TargetSpec::new(vec![Target { goal: 0.0, weight: -1.0 }]).is_err());
    }

    #[test]
    fn loss_exact_hit_is_zero() {
        // f(0.5, 0.5) = (1, 0)
        let t = TargetSpec::new(vec![
            Target { goal: 1.0, weight: 1.0 },
            Target { goal: 0.0, weight: 7.0 },
        ])
        .unwrap();
        assert_eq!(search_loss(&[0.5, 0.5], &two_heads(), &t).unwrap(), 0.0);
    }

    #[test]
    fn loss_hand_sum() {
        // f(1.5, -0.5) = (1, 2)
        let t = TargetSpec::new(vec![
            Target { goal: 0.0, weight: 1.0 },
            Target { goal: 0.0, weight: 2.0 },
        ])
        .unwrap();
        assert_eq!(search_loss(&[1.5, -0.5], &two_heads(), &t).unwrap(), 5.0);
    }

    #[test]
    fn direction_three_four_five() {
        let net = linear(vec![3.0, 4.0]);
        let t = TargetSpec::goals(&[-100.0]).unwrap();
        let all = masked_step_direction(&[0.1, 0.2], &net, &t, &Mask::all(2)).unwrap();
        assert!((all[0] - 0.6).abs() < 1e-15 && (all[1] - 0.8).abs() < 1e-15);
        let m = Mask::new(vec![true, false]).unwrap();
        assert_eq!(masked_step_direction(&[0.1, 0.2], &net, &t, &m).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn unit_gradient_is_a_fixed_point() {
        let net = linear(vec![0.6, 0.8]);
        let t = TargetSpec::goals(&[-100.0]).unwrap();
        let d = masked_step_direction(&[0.0, 0.0], &net, &t, &Mask::all(2)).unwrap();
        assert_eq!(d, vec![0.6, 0.8]);
    }

    #[test]
    fn zero_gradient_stops_early() {
        let net = linear(vec![1.0, 1.0]);
        // exact hit at the start point: sign(0) = 0 gives a zero direction
        let t = TargetSpec::goals(&[1.0]).unwrap();
        let spec = SearchSpec::new(unit_box(2), Mask::all(2), t);
        let res = run_search(&net, &spec, &[0.5, 0.5]).unwrap();
        assert!(res.stationary);
        assert_eq!(res.trajectory.len(), 1);
        assert_eq!(res.x_final, vec![0.5, 0.5]);
    }

    #[test]
    fn fixed_feature_is_bit_exact_and_clipped_feature_hits_face() {
        let net = linear(vec![1.0, 1.0]);
        let t = TargetSpec::goals(&[100.0]).unwrap();
        let mut spec = SearchSpec::new(unit_box(2), Mask::new(vec![true, false]).unwrap(), t);
        spec.n_iters = 50;
        let x0 = [0.1, 0.123_456_789];
        let res = run_search(&net, &spec, &x0).unwrap();
        assert_eq!(res.x_final[0], 1.0);
        for p in &res.trajectory {
            assert_eq!(p.x[1].to_bits(), x0[1].to_bits());
        }
    }

    #[test]
    fn start_outside_box_is_projected() {
        let net = linear(vec![1.0]);
        let t = TargetSpec::goals(&[-5.0]).unwrap();
        let spec = SearchSpec::new(unit_box(1), Mask::all(1), t);
        let res = run_search(&net, &spec, &[3.0]).unwrap();
        assert_eq!(res.x_start, vec![1.0]);
    }

    #[test]
    fn cancellation_is_reported() {
        let net = linear(vec![1.0]);
        let t = TargetSpec::goals(&[-5.0]).unwrap();
        let spec = SearchSpec::new(unit_box(1), Mask::all(1), t);
        let err = run_search_observed(&net, &spec, &[1.0], 0, 0, &mut |p| {
            if p.iteration == 3 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Canceled { iteration: 3 }));
    }

    #[test]
    fn one_restart_equals_single_run() {
        let net = linear(vec![1.0, -2.0]);
        let t = TargetSpec::goals(&[0.3]).unwrap();
        let mut spec = SearchSpec::new(unit_box(2), Mask::all(2), t);
        spec.n_restarts = 1;
        spec.seed = 11;
        let multi = multi_start_search(&net, &spec).unwrap();
        let single = run_search(&net, &spec, &restart_start(&spec, 0)).unwrap();
        assert_eq!(multi, single);
    }

    #[test]
    fn request_round_trip_and_field_errors() {
        let json = r#"{"bounds": [[0, 1], [-1, 1]], "mask": [1, 0], "targets": [{"goal": 2.0, "weight": 1.0}],
                       "eta": 0.1, "iters": 10, "restarts": 2, "seed": 3, "base_point": [0.5, 0.25]}"#;
        let req: SearchRequest = serde_json::from_str(json).unwrap();
        let spec = req.clone().into_spec(2, 1).unwrap();
        assert_eq!(SearchRequest::from(&spec), req);

        let bad: SearchRequest =
            serde_json::from_str(r#"{"bounds": [[0, 1]], "mask": [2], "targets": [{"goal": 0}]}"#).unwrap();
        assert!(matches!(bad.into_spec(1, 1), Err(Error::InvalidField { .. })));
        let wrong_dim: SearchRequest =
            serde_json::from_str(r#"{"bounds": [[0, 1]], "targets": [{"goal": 0}]}"#).unwrap();
        assert!(matches!(wrong_dim.into_spec(2, 1), Err(Error::InvalidField { .. })));
        let infeasible: SearchRequest =
            serde_json::from_str(r#"{"bounds": [[2, 1]], "targets": [{"goal": 0}]}"#).unwrap();
        assert!(matches!(infeasible.into_spec(1, 1), Err(Error::InfeasibleBox { .. })));
    }
}
