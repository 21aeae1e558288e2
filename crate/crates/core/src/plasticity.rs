//! STDP and reward-modulated STDP for convolutional layers.
//!
//! For a winner `i` and a synapse `j` in its receptive field the update is
//!
//! ```text
//! ΔW = A+ · stab   if T_j <= T_i  (pre fired no later than post)
//! ΔW = A- · stab   otherwise
//! stab = (W − LB)(UB − W) with the stabilizer on, 1 without it
//! ```
//!
//! A presynaptic neuron that never fired counts as firing after the winner.
//! Without the stabilizer the weights are clamped into `[LB, UB]`.

use std::collections::BTreeMap;

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{ConvLayer, Winner};
use crate::scalar::Scalar;
use crate::tensor::{Potentials, SpikeTime, SpikeWave};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdpRule {
    pub a_plus: f64,
    pub a_minus: f64,
    #[serde(default)]
    pub lower_bound: f64,
    #[serde(default = "one")]
    pub upper_bound: f64,
    #[serde(default = "yes")]
    pub use_stabilizer: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl StdpRule {
    pub fn new(a_plus: f64, a_minus: f64) -> Self {
        Self {
            a_plus,
            a_minus,
            lower_bound: 0.0,
            upper_bound: 1.0,
            use_stabilizer: true,
        }
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower_bound = lower;
        self.upper_bound = upper;
        self
    }

    pub fn with_stabilizer(mut self, on: bool) -> Self {
        self.use_stabilizer = on;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lower_bound < self.upper_bound) {
            return Err(Error::invalid(format!(
                "STDP bounds must satisfy LB < UB, got [{}, {}]",
                self.lower_bound, self.upper_bound
            )));
        }
        if !self.a_plus.is_finite() || !self.a_minus.is_finite() {
            return Err(Error::invalid("STDP learning rates must be finite"));
        }
        Ok(())
    }

    /// Multiplies both learning rates by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            a_plus: self.a_plus * factor,
            a_minus: self.a_minus * factor,
            ..self
        }
    }

    /// Weight change for a synapse of weight `w`; `causal` means `T_j <= T_i`.
    pub fn delta<T: Scalar>(&self, w: T, causal: bool) -> T {
        let rate = T::from_f64_lossy(if causal { self.a_plus } else { self.a_minus });
        if self.use_stabilizer {
            let lb = T::from_f64_lossy(self.lower_bound);
            let ub = T::from_f64_lossy(self.upper_bound);
            rate * (w - lb) * (ub - w)
        } else {
            rate
        }
    }
}

/// The same rule with both learning rates negated.
pub fn anti_stdp_rule(rule: StdpRule) -> StdpRule {
    StdpRule {
        a_plus: -rule.a_plus,
        a_minus: -rule.a_minus,
        ..rule
    }
}

/// Data a layer's forward pass leaves behind for plasticity.
#[derive(Debug, Clone)]
pub struct PlasticityContext<T> {
    pub input: SpikeWave<T>,
    pub potentials: Potentials<T>,
    pub output: SpikeWave<T>,
    pub winners: Vec<Winner>,
}

impl<T: Scalar> PlasticityContext<T> {
    pub fn new(
        input: SpikeWave<T>,
        potentials: Potentials<T>,
        output: SpikeWave<T>,
        winners: Vec<Winner>,
    ) -> Result<Self> {
        if potentials.shape() != output.shape() {
            return Err(Error::ShapeMismatch {
                expected: output.shape().to_vec(),
                actual: potentials.shape().to_vec(),
            });
        }
        if input.t_max() != output.t_max() {
            return Err(Error::invalid("input and output disagree on t_max"));
        }
        Ok(Self {
            input,
            potentials,
            output,
            winners,
        })
    }
}

/// What one plasticity call changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightDelta {
    /// Output features whose kernels were updated, ascending.
    pub features: Vec<usize>,
    pub potentiated: usize,
    pub depressed: usize,
    /// Sum of |new − old| over all changed weights.
    pub total_abs_change: f64,
    pub max_abs_change: f64,
}

impl WeightDelta {
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Applies `rule` to the receptive fields of the context's winners.
///
/// All deltas are computed from the weights as they were before the call and
/// then applied together, so overlapping winners do not depend on order.
pub fn stdp_step<T: Scalar>(
    layer: &mut ConvLayer<T>,
    rule: &StdpRule,
    ctx: &PlasticityContext<T>,
) -> Result<WeightDelta> {
    rule.check()?;
    let [nt, fi, h, w] = ctx.input.shape();
    let [_, fo, oh, ow] = ctx.output.shape();
    let (kh, kw) = layer.kernel_size();
    if fi != layer.in_features() || fo != layer.out_features() {
        return Err(Error::invalid("context features do not match the layer"));
    }
    if h < kh || w < kw || oh != h - kh + 1 || ow != w - kw + 1 {
        return Err(Error::invalid(format!(
            "context geometry {h}x{w} -> {oh}x{ow} does not match kernel {kh}x{kw}"
        )));
    }
    for win in &ctx.winners {
        if win.feature >= fo || win.row >= oh || win.column >= ow {
            return Err(Error::invalid(format!("winner {win:?} out of bounds")));
        }
    }
    if ctx.winners.is_empty() {
        return Ok(WeightDelta::default());
    }

    let pre = ctx.input.as_array().as_standard_layout();
    let pre = pre.as_slice().expect("standard layout");
    let post = ctx.output.as_array().as_standard_layout();
    let post = post.as_slice().expect("standard layout");
    let weights = layer.weights();
    let mut deltas: BTreeMap<usize, Array3<T>> = BTreeMap::new();
    for win in &ctx.winners {
        // fire_infinite winners carry their activity at the final step
        let at = (win.feature * oh + win.row) * ow + win.column;
        let t_post = first_time(post, nt, fo * oh * ow, at)
            .get()
            .unwrap_or(nt - 1);
        let d = deltas
            .entry(win.feature)
            .or_insert_with(|| Array3::zeros([fi, kh, kw]));
        let post = SpikeTime::at(t_post);
        for ((i, kr, kc), dv) in d.indexed_iter_mut() {
            let at = (i * h + win.row + kr) * w + win.column + kc;
            let t_pre = first_time(pre, nt, fi * h * w, at);
            let causal = t_pre.is_spike() && t_pre <= post;
            *dv += rule.delta(weights[[win.feature, i, kr, kc]], causal);
        }
    }

    let lb = T::from_f64_lossy(rule.lower_bound);
    let ub = T::from_f64_lossy(rule.upper_bound);
    let mut summary = WeightDelta::default();
    for (f, d) in deltas {
        let mut kernel = layer.feature(f);
        for (wv, dv) in kernel.iter_mut().zip(d.iter()) {
            let old = *wv;
            let mut new = old + *dv;
            if !rule.use_stabilizer {
                new = new.max(lb).min(ub);
            }
            *wv = new;
            let change = (new - old).to_f64_lossy();
            if *dv > T::zero() {
                summary.potentiated += 1;
            } else if *dv < T::zero() {
                summary.depressed += 1;
            }
            summary.total_abs_change += change.abs();
            summary.max_abs_change = summary.max_abs_change.max(change.abs());
        }
        layer.set_feature(f, kernel.view())?;
        summary.features.push(f);
    }
    Ok(summary)
}

/// First time-step at which flat neuron `at` of a `(T, plane)` tensor is
/// nonzero.
fn first_time<T: Scalar>(a: &[T], nt: usize, plane: usize, at: usize) -> SpikeTime {
    (0..nt)
        .find(|t| !a[t * plane + at].is_zero())
        .map_or(SpikeTime::NO_SPIKE, SpikeTime::at)
}

/// Reward branch of R-STDP: plain STDP with the reward rule.
pub fn reward<T: Scalar>(
    layer: &mut ConvLayer<T>,
    stdp_rule: &StdpRule,
    ctx: &PlasticityContext<T>,
) -> Result<WeightDelta> {
    stdp_step(layer, stdp_rule, ctx)
}

/// Punishment branch of R-STDP: STDP with the anti-STDP rule.
pub fn punish<T: Scalar>(
    layer: &mut ConvLayer<T>,
    anti_rule: &StdpRule,
    ctx: &PlasticityContext<T>,
) -> Result<WeightDelta> {
    stdp_step(layer, anti_rule, ctx)
}

/// `Σ W(1 − W) / count`; close to zero once weights settle at 0 or 1.
pub fn convergence_metric<T: Scalar>(weights: &Array4<T>) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let sum: f64 = weights
        .iter()
        .map(|w| {
            let w = w.to_f64_lossy();
            w * (1.0 - w)
        })
        .sum();
    sum / weights.len() as f64
}

/// Fraction of weights within `tolerance` of either bound.
pub fn saturation<T: Scalar>(weights: &Array4<T>, lower: f64, upper: f64, tolerance: f64) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let near = weights
        .iter()
        .filter(|w| {
            let w = w.to_f64_lossy();
            (w - lower).abs() <= tolerance || (upper - w).abs() <= tolerance
        })
        .count();
    near as f64 / weights.len() as f64
}
