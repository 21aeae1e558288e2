use std::ops::Range;
use std::path::Path;

use ndarray::{Array4, Ix4, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::{
    conv_forward, fire, fire_infinite, get_k_winners, pad_spikewave, pointwise_inhibition, pool,
    ConvLayer, Winner,
};
use crate::plasticity::{PlasticityContext, StdpRule};
use crate::scalar::Scalar;
use crate::tensor::{Potentials, SpikeWave};
use crate::textfmt::{load_tensor, save_tensor};

use super::config::{NetworkConfig, StageConfig, STAGES};
use super::seed::derive_seed;

/// Output of the decision layer for one stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    /// `None` for a silent stimulus.
    pub label: Option<usize>,
    pub winner: Option<Winner>,
}

impl Decision {
    pub fn silent() -> Self {
        Self {
            label: None,
            winner: None,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.label.is_none()
    }
}

/// Three convolution/pooling stages followed by a decision map.
///
/// Stages are numbered from 1. The current learning rules live here too so
/// that schedules can adjust them between samples.
#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetworkConfig,
    layers: Vec<ConvLayer<T>>,
    rules: Vec<StdpRule>,
    punish: StdpRule,
}

impl<T: Scalar> Network<T> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
        let layers = config
            .stages
            .iter()
            .map(|s| {
                ConvLayer::new(
                    s.in_features,
                    s.out_features,
                    (s.kernel, s.kernel),
                    s.init,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(config, layers))
    }

    pub fn from_layers(config: NetworkConfig, layers: Vec<ConvLayer<T>>) -> Result<Self> {
        config.validate()?;
        if layers.len() != STAGES {
            return Err(Error::invalid(format!("expected {STAGES} layers, got {}", layers.len())));
        }
        for (i, (l, s)) in layers.iter().zip(&config.stages).enumerate() {
            let want = [s.out_features, s.in_features, s.kernel, s.kernel];
            if l.weights().shape() != want {
                return Err(Error::invalid(format!(
                    "stage {} weights have shape {:?}, expected {want:?}",
                    i + 1,
                    l.weights().shape()
                )));
            }
        }
        Ok(Self::assemble(config, layers))
    }

    fn assemble(config: NetworkConfig, layers: Vec<ConvLayer<T>>) -> Self {
        let rules = config.stages.iter().map(|s| s.stdp).collect();
        let punish = config.punish_rule();
        Self {
            config,
            layers,
            rules,
            punish,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn check_stage(stage: usize) -> Result<usize> {
        if (1..=STAGES).contains(&stage) {
            Ok(stage - 1)
        } else {
            Err(Error::invalid(format!("stage must be in 1..={STAGES}, got {stage}")))
        }
    }

    pub fn layer(&self, stage: usize) -> &ConvLayer<T> {
        &self.layers[stage - 1]
    }

    pub fn layer_mut(&mut self, stage: usize) -> &mut ConvLayer<T> {
        &mut self.layers[stage - 1]
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn rule(&self, stage: usize) -> StdpRule {
        self.rules[stage - 1]
    }

    pub fn set_rule(&mut self, stage: usize, rule: StdpRule) -> Result<()> {
        rule.check()?;
        self.rules[Self::check_stage(stage)?] = rule;
        Ok(())
    }

    pub fn punish_rule(&self) -> StdpRule {
        self.punish
    }

    pub fn set_punish_rule(&mut self, rule: StdpRule) -> Result<()> {
        rule.check()?;
        self.punish = rule;
        Ok(())
    }

    fn stage_cfg(&self, stage: usize) -> &StageConfig {
        &self.config.stages[stage - 1]
    }

    fn check_input(&self, stage: usize, input: &SpikeWave<T>) -> Result<()> {
        let [nt, nf, _, _] = input.shape();
        let want = self.stage_cfg(stage).in_features;
        if nt != self.config.t_max.t_max() {
            return Err(Error::invalid(format!(
                "input has {nt} time-steps, network uses {}",
                self.config.t_max.t_max()
            )));
        }
        if nf != want {
            return Err(Error::invalid(format!(
                "stage {stage} expects {want} input features, got {nf}"
            )));
        }
        Ok(())
    }

    /// Pads, convolves and fires one stage. Returns the padded input, the
    /// thresholded potentials and the spikes.
    fn run_stage(&self, stage: usize, input: &SpikeWave<T>) -> Result<(SpikeWave<T>, Potentials<T>, SpikeWave<T>)> {
        self.check_input(stage, input)?;
        let cfg = self.stage_cfg(stage);
        let p = cfg.pad;
        let padded = pad_spikewave(input, (p, p, p, p));
        let pot = conv_forward(self.layer(stage), &padded)?;
        let (pot, spk) = match cfg.threshold {
            Some(th) => {
                let spk = fire(&pot, T::from_f64_lossy(th));
                (mask(pot, &spk), spk)
            }
            None => {
                let (spk, pot) = fire_infinite(&pot);
                (pot, spk)
            }
        };
        Ok((padded, pot, spk))
    }

    fn pool_stage(&self, stage: usize, spk: SpikeWave<T>) -> Result<SpikeWave<T>> {
        match &self.stage_cfg(stage).pool {
            Some(spec) => pool(&spk, spec),
            None => Ok(spk),
        }
    }

    /// Feeds `input` (the input of stage `from`) through stages
    /// `from..to` and returns the pooled spikes that enter stage `to`.
    pub fn propagate(&self, from: usize, to: usize, input: &SpikeWave<T>) -> Result<SpikeWave<T>> {
        Self::check_stage(from)?;
        if to < from || to > STAGES + 1 {
            return Err(Error::invalid(format!("cannot propagate from stage {from} to {to}")));
        }
        let mut x = input.clone();
        for stage in from..to {
            let (_, _, spk) = self.run_stage(stage, &x)?;
            x = self.pool_stage(stage, spk)?;
        }
        Ok(x)
    }

    /// Test-time pass for a stimulus entering at stage 1.
    pub fn forward_test(&self, input: &SpikeWave<T>) -> Result<Decision> {
        self.forward_test_from(1, input)
    }

    /// Test-time pass for a stimulus entering at `entry_stage`: every stage
    /// fires without competition, and the decision is the globally best
    /// neuron of the last stage.
    pub fn forward_test_from(&self, entry_stage: usize, input: &SpikeWave<T>) -> Result<Decision> {
        let x = self.propagate(entry_stage, STAGES, input)?;
        let (_, pot, _) = self.run_stage(STAGES, &x)?;
        Ok(self.decide(&get_k_winners(&pot, 1, 0)))
    }

    /// Maps the first (most salient) winner through the decision map.
    pub fn decide(&self, winners: &[Winner]) -> Decision {
        match winners.first() {
            Some(w) => Decision {
                label: Some(self.config.decision_map[w.feature]),
                winner: Some(*w),
            },
            None => Decision::silent(),
        }
    }

    /// Training pass for a stimulus entering at stage 1; see
    /// [`Network::forward_train_from`].
    pub fn forward_train(&self, input: &SpikeWave<T>, max_layer: usize) -> Result<PlasticityContext<T>> {
        self.forward_train_from(1, input, max_layer)
    }

    /// Runs up to stage `max_layer` and returns what plasticity on that
    /// stage needs. Stages after `max_layer` are not touched.
    pub fn forward_train_from(
        &self,
        entry_stage: usize,
        input: &SpikeWave<T>,
        max_layer: usize,
    ) -> Result<PlasticityContext<T>> {
        Self::check_stage(max_layer)?;
        if entry_stage > max_layer {
            return Err(Error::invalid(format!(
                "stage {max_layer} lies before the entry stage {entry_stage}"
            )));
        }
        let mut x = input.clone();
        for stage in entry_stage..=max_layer {
            if self.stage_cfg(stage).input_inhibition {
                x = inhibit_spikes(&x)?;
            }
            if stage == max_layer {
                break;
            }
            let (_, _, spk) = self.run_stage(stage, &x)?;
            x = self.pool_stage(stage, spk)?;
        }
        let cfg = self.stage_cfg(max_layer);
        let (padded, mut pot, mut spk) = self.run_stage(max_layer, &x)?;
        if cfg.pointwise_inhibition {
            (pot, spk) = pointwise_inhibition(&pot, &spk)?;
        }
        let winners = get_k_winners(&pot, cfg.k_winners, cfg.inhibition_radius);
        PlasticityContext::new(padded, pot, spk, winners)
    }

    /// Hex SHA-256 over the shapes and weight bit patterns of `stages`.
    pub fn checksum(&self, stages: Range<usize>) -> String {
        let mut h = Sha256::new();
        for stage in stages {
            let w = self.layer(stage).weights();
            for d in w.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in w.iter() {
                h.update(v.to_f64_lossy().to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn weights_checksum(&self) -> String {
        self.checksum(1..STAGES + 1)
    }

    /// Writes `conv1.txt` … `conv3.txt` into `dir`.
    pub fn save_weights(&self, dir: &Path) -> Result<()> {
        for stage in 1..=STAGES {
            save_tensor(
                self.layer(stage).weights().view().into_dyn(),
                &dir.join(weight_file(stage)),
            )?;
        }
        Ok(())
    }

    pub fn load_weights(config: NetworkConfig, dir: &Path) -> Result<Self> {
        let layers = (1..=STAGES)
            .map(|stage| {
                let w = load_tensor::<T>(&dir.join(weight_file(stage)))?
                    .into_dimensionality::<Ix4>()
                    .map_err(|_| Error::invalid(format!("{} is not rank 4", weight_file(stage))))?;
                ConvLayer::from_weights(w)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(config, layers)
    }
}

pub fn weight_file(stage: usize) -> String {
    format!("conv{stage}.txt")
}

fn inhibit_spikes<T: Scalar>(s: &SpikeWave<T>) -> Result<SpikeWave<T>> {
    Ok(pointwise_inhibition(&s.to_potentials(), s)?.1)
}

/// Zeroes potentials wherever no spike has been emitted.
fn mask<T: Scalar>(pot: Potentials<T>, spk: &SpikeWave<T>) -> Potentials<T> {
    let mut a: Array4<T> = pot.into_array();
    Zip::from(&mut a).and(spk.as_array()).for_each(|p, &s| {
        if s.is_zero() {
            *p = T::zero();
        }
    });
    Potentials::new(a)
}
