use serde::{Deserialize, Serialize};

use crate::encoding::KernelSpec;
use crate::error::{Error, Result};
use crate::layers::{conv_output_size, PoolSpec, WeightInit};
use crate::plasticity::{anti_stdp_rule, StdpRule};
use crate::tensor::TimeConfig;

/// One `S` (convolution) stage and the `C` (pooling) stage after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub in_features: usize,
    pub out_features: usize,
    pub kernel: usize,
    #[serde(default)]
    pub init: WeightInit,
    /// Symmetric zero padding applied to the stage input.
    #[serde(default)]
    pub pad: usize,
    /// Firing threshold; `None` means infinite (decide from final potentials).
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Winners per stimulus during training.
    #[serde(default = "default_k")]
    pub k_winners: usize,
    #[serde(default)]
    pub inhibition_radius: usize,
    /// Pointwise feature competition on the training path.
    #[serde(default = "default_true")]
    pub pointwise_inhibition: bool,
    /// Pointwise competition on this stage's input, training path only.
    #[serde(default)]
    pub input_inhibition: bool,
    pub stdp: StdpRule,
    #[serde(default)]
    pub pool: Option<PoolSpec>,
}

fn default_k() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// Spatial sizes along the network for a given input image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageGeometry {
    /// After padding, i.e. what the convolution sees.
    pub input: (usize, usize),
    pub conv: (usize, usize),
    pub pooled: (usize, usize),
}

/// Image front end: filter bank, local normalization, optional intensity
/// lateral inhibition, then rank-order latency coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub kernels: Vec<KernelSpec>,
    pub padding: usize,
    pub threshold: f64,
    pub norm_radius: usize,
    #[serde(default = "default_eps")]
    pub norm_epsilon: f64,
    #[serde(default)]
    pub lateral_inhibition: Option<Vec<f64>>,
}

fn default_eps() -> f64 {
    crate::encoding::DEFAULT_NORM_EPSILON
}

impl Default for EncodingConfig {
    /// Six DoG kernels at three scales, on- and off-center.
    fn default() -> Self {
        let dog = |size, s1: f64, s2: f64| KernelSpec::Dog {
            size,
            sigma1: s1 / 9.0,
            sigma2: s2 / 9.0,
        };
        Self {
            kernels: vec![
                dog(3, 3.0, 6.0),
                dog(3, 6.0, 3.0),
                dog(7, 7.0, 14.0),
                dog(7, 14.0, 7.0),
                dog(13, 13.0, 26.0),
                dog(13, 26.0, 13.0),
            ],
            padding: 6,
            threshold: 50.0,
            norm_radius: 8,
            norm_epsilon: default_eps(),
            lateral_inhibition: None,
        }
    }
}

/// Three S/C stages plus the readout. The last stage is the decision layer:
/// trained with R-STDP and read out through `decision_map`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub t_max: TimeConfig,
    pub encoding: EncodingConfig,
    pub stages: Vec<StageConfig>,
    /// Anti-STDP rule for punishment; defaults to the last stage's rule with
    /// negated learning rates.
    #[serde(default)]
    pub punish: Option<StdpRule>,
    pub classes: usize,
    pub decision_map: Vec<usize>,
}

pub const STAGES: usize = 3;

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.len() != STAGES {
            return Err(Error::invalid(format!(
                "network needs exactly {STAGES} stages, got {}",
                self.stages.len()
            )));
        }
        if self.encoding.kernels.is_empty() {
            return Err(Error::invalid("encoding needs at least one kernel"));
        }
        if self.stages[0].in_features != self.encoding.kernels.len() {
            return Err(Error::invalid(format!(
                "stage 1 expects {} features, encoder produces {}",
                self.stages[0].in_features,
                self.encoding.kernels.len()
            )));
        }
        for (i, pair) in self.stages.windows(2).enumerate() {
            if pair[1].in_features != pair[0].out_features {
                return Err(Error::invalid(format!(
                    "stage {} expects {} features, stage {} produces {}",
                    i + 2,
                    pair[1].in_features,
                    i + 1,
                    pair[0].out_features
                )));
            }
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.stdp.check()?;
            if s.k_winners == 0 {
                return Err(Error::invalid(format!("stage {} needs k_winners >= 1", i + 1)));
            }
        }
        self.punish_rule().check()?;
        let last = &self.stages[STAGES - 1];
        if self.decision_map.len() != last.out_features {
            return Err(Error::invalid(format!(
                "decision map has {} entries for {} decision features",
                self.decision_map.len(),
                last.out_features
            )));
        }
        if let Some(bad) = self.decision_map.iter().find(|&&c| c >= self.classes) {
            return Err(Error::invalid(format!("decision map label {bad} >= {}", self.classes)));
        }
        for class in 0..self.classes {
            if !self.decision_map.contains(&class) {
                return Err(Error::invalid(format!("class {class} missing from decision map")));
            }
        }
        Ok(())
    }

    pub fn punish_rule(&self) -> StdpRule {
        self.punish
            .unwrap_or_else(|| anti_stdp_rule(self.stages[STAGES - 1].stdp))
    }

    /// Per-stage sizes for an `h`×`w` image, or an error if some stage does
    /// not fit.
    pub fn geometry(&self, h: usize, w: usize) -> Result<Vec<StageGeometry>> {
        let k = self
            .encoding
            .kernels
            .iter()
            .map(KernelSpec::size)
            .max()
            .unwrap_or(1);
        let enc = |x: usize| (x + 2 * self.encoding.padding + 1).checked_sub(k);
        let (mut h, mut w) = match (enc(h), enc(w)) {
            (Some(h), Some(w)) if h > 0 && w > 0 => (h, w),
            _ => return Err(Error::invalid("image smaller than the encoding kernels")),
        };
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let input = (h + 2 * s.pad, w + 2 * s.pad);
            let conv = match (
                conv_output_size(input.0, s.kernel),
                conv_output_size(input.1, s.kernel),
            ) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::invalid(format!(
                        "stage {} input {}x{} smaller than kernel {}",
                        i + 1,
                        input.0,
                        input.1,
                        s.kernel
                    )))
                }
            };
            let pooled = match &s.pool {
                Some(p) => {
                    if p.window.0 > conv.0 + 2 * p.padding.0 || p.window.1 > conv.1 + 2 * p.padding.1 {
                        return Err(Error::invalid(format!("stage {} pooling window too large", i + 1)));
                    }
                    p.output_size(conv.0, conv.1)
                }
                None => conv,
            };
            if pooled.0 == 0 || pooled.1 == 0 {
                return Err(Error::invalid(format!("stage {} output is empty", i + 1)));
            }
            out.push(StageGeometry { input, conv, pooled });
            (h, w) = pooled;
        }
        Ok(out)
    }

    /// Geometry of the MNIST digit network: 6 DoG maps → 30 → 250 → 200
    /// decision features (20 per digit). Thresholds, winner counts and radii
    /// are tuned defaults for this build.
    pub fn mnist_default() -> Self {
        let stdp = StdpRule::new(0.004, -0.003);
        let decision = StdpRule::new(0.004, -0.003)
            .with_stabilizer(false)
            .with_bounds(0.2, 0.8);
        Self {
            t_max: TimeConfig::new(15).expect("positive"),
            encoding: EncodingConfig::default(),
            stages: vec![
                StageConfig {
                    in_features: 6,
                    out_features: 30,
                    kernel: 5,
                    init: WeightInit::default(),
                    pad: 2,
                    threshold: Some(15.0),
                    k_winners: 5,
                    inhibition_radius: 3,
                    pointwise_inhibition: true,
                    input_inhibition: false,
                    stdp,
                    pool: Some(PoolSpec::square(2, 2, 1)),
                },
                StageConfig {
                    in_features: 30,
                    out_features: 250,
                    kernel: 3,
                    init: WeightInit::default(),
                    pad: 1,
                    threshold: Some(10.0),
                    k_winners: 8,
                    inhibition_radius: 1,
                    pointwise_inhibition: true,
                    input_inhibition: false,
                    stdp,
                    pool: Some(PoolSpec::square(3, 3, 1)),
                },
                StageConfig {
                    in_features: 250,
                    out_features: 200,
                    kernel: 5,
                    init: WeightInit::default(),
                    pad: 2,
                    threshold: None,
                    k_winners: 1,
                    inhibition_radius: 0,
                    pointwise_inhibition: false,
                    input_inhibition: false,
                    stdp: decision,
                    pool: None,
                },
            ],
            // Punishment only depresses the synapses that caused the wrong
            // decision. Raising the silent ones too broadens the losing
            // feature until it wins for every class.
            punish: Some(
                StdpRule::new(-0.004, 0.0)
                    .with_stabilizer(false)
                    .with_bounds(0.2, 0.8),
            ),
            classes: 10,
            decision_map: (0..200).map(|f| f / 20).collect(),
        }
    }
}
