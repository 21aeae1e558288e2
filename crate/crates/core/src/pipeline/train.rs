use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plasticity::{convergence_metric, punish, reward, stdp_step, StdpRule, WeightDelta};
use crate::scalar::Scalar;

use super::config::STAGES;
use super::dataset::SampleSource;
use super::network::{Decision, Network};
use super::seed::epoch_seed;

/// Correct / wrong / silent counts over a stream of stimuli.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTally {
    pub correct: usize,
    pub wrong: usize,
    pub silent: usize,
}

impl EvalTally {
    pub fn total(&self) -> usize {
        self.correct + self.wrong + self.silent
    }

    pub fn record(&mut self, decision: &Decision, label: usize) {
        match decision.label {
            None => self.silent += 1,
            Some(l) if l == label => self.correct += 1,
            Some(_) => self.wrong += 1,
        }
    }

    fn rate(&self, n: usize) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            n as f64 / self.total() as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.rate(self.correct)
    }

    pub fn wrong_rate(&self) -> f64 {
        self.rate(self.wrong)
    }

    pub fn silent_rate(&self) -> f64 {
        self.rate(self.silent)
    }

    pub fn merge(self, other: EvalTally) -> EvalTally {
        EvalTally {
            correct: self.correct + other.correct,
            wrong: self.wrong + other.wrong,
            silent: self.silent + other.silent,
        }
    }
}

/// Multiplies the learning rates by `factor` every `every` samples, capping
/// `A+` at `max_a_plus` and setting `A- = a_minus_ratio · A+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub every: usize,
    pub factor: f64,
    pub max_a_plus: f64,
    pub a_minus_ratio: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            every: 500,
            factor: 2.0,
            max_a_plus: 0.15,
            a_minus_ratio: -0.75,
        }
    }
}

impl LrSchedule {
    pub fn next(&self, rule: StdpRule) -> StdpRule {
        let a_plus = (rule.a_plus * self.factor).min(self.max_a_plus);
        StdpRule {
            a_plus,
            a_minus: a_plus * self.a_minus_ratio,
            ..rule
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedOptions {
    /// Shuffle seed; `None` keeps the source order.
    pub shuffle_seed: Option<u64>,
    pub schedule: Option<LrSchedule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlOptions {
    pub shuffle_seed: Option<u64>,
    /// Scale reward rates by the last epoch's error rate and punishment
    /// rates by its accuracy.
    pub adaptive: bool,
}

impl Default for RlOptions {
    fn default() -> Self {
        Self {
            shuffle_seed: None,
            adaptive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub accuracy: f64,
    pub checksum: String,
}

/// Progress across phases: epochs and samples per stage (stage 3 counts
/// R-STDP), convergence per epoch, and the best R-STDP epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs: [usize; STAGES],
    pub samples: [u64; STAGES],
    pub convergence: [Vec<f64>; STAGES],
    pub rl_tallies: Vec<EvalTally>,
    pub best: Option<BestCheckpoint>,
}

fn order(n: usize, seed: Option<u64>, phase: &str, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(seed, phase, epoch)));
    }
    idx
}

/// Layer-wise STDP on `stage`; returns the convergence metric after each
/// epoch. Other stages' weights are never written.
pub fn train_unsupervised<T: Scalar, S: SampleSource<T> + ?Sized>(
    net: &mut Network<T>,
    source: &S,
    stage: usize,
    epochs: usize,
    opts: &UnsupervisedOptions,
    state: &mut TrainState,
) -> Result<Vec<f64>> {
    if !(1..=STAGES).contains(&stage) {
        return Err(Error::invalid(format!("no stage {stage}")));
    }
    source.check_network(net)?;
    let entry = source.entry_stage();
    let t_max = net.config().t_max;
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let epoch = state.epochs[stage - 1];
        for i in order(source.len(), opts.shuffle_seed, &format!("stage{stage}"), epoch) {
            let x = source.spikes(i)?.to_spikewave::<T>(t_max)?;
            let ctx = net.forward_train_from(entry, &x, stage)?;
            let rule = net.rule(stage);
            stdp_step(net.layer_mut(stage), &rule, &ctx)?;
            state.samples[stage - 1] += 1;
            if let Some(s) = &opts.schedule {
                if s.every > 0 && state.samples[stage - 1].is_multiple_of(s.every as u64) {
                    net.set_rule(stage, s.next(rule))?;
                }
            }
        }
        let c = convergence_metric(net.layer(stage).weights());
        log::info!("stage {stage} epoch {epoch}: convergence {c:.6}");
        state.epochs[stage - 1] += 1;
        state.convergence[stage - 1].push(c);
        history.push(c);
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RlAction {
    Reward,
    Punish,
    Silent,
}

/// One R-STDP step as it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlEvent {
    pub index: usize,
    pub label: usize,
    pub decision: Option<usize>,
    pub action: RlAction,
    pub delta: WeightDelta,
}

fn check_label(label: usize, classes: usize, index: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::invalid(format!(
            "sample {index} has label {label}, network knows {classes} classes"
        )));
    }
    Ok(())
}

/// One R-STDP epoch over `source`: rewards correct decisions, punishes wrong
/// ones and leaves silent samples alone.
pub fn train_rl<T: Scalar, S: SampleSource<T> + ?Sized>(
    net: &mut Network<T>,
    source: &S,
    opts: &RlOptions,
    state: &mut TrainState,
) -> Result<EvalTally> {
    train_rl_traced(net, source, opts, state, None)
}

pub fn train_rl_traced<T: Scalar, S: SampleSource<T> + ?Sized>(
    net: &mut Network<T>,
    source: &S,
    opts: &RlOptions,
    state: &mut TrainState,
    mut trace: Option<&mut Vec<RlEvent>>,
) -> Result<EvalTally> {
    source.check_network(net)?;
    let entry = source.entry_stage();
    let t_max = net.config().t_max;
    let classes = net.config().classes;
    let epoch = state.epochs[STAGES - 1];
    let mut tally = EvalTally::default();
    for i in order(source.len(), opts.shuffle_seed, "rl", epoch) {
        let label = source.label(i);
        check_label(label, classes, i)?;
        let x = source.spikes(i)?.to_spikewave::<T>(t_max)?;
        let ctx = net.forward_train_from(entry, &x, STAGES)?;
        let decision = net.decide(&ctx.winners);
        tally.record(&decision, label);
        let (action, delta) = match decision.label {
            None => (RlAction::Silent, WeightDelta::default()),
            Some(d) if d == label => {
                let rule = net.rule(STAGES);
                (RlAction::Reward, reward(net.layer_mut(STAGES), &rule, &ctx)?)
            }
            Some(_) => {
                let rule = net.punish_rule();
                (RlAction::Punish, punish(net.layer_mut(STAGES), &rule, &ctx)?)
            }
        };
        state.samples[STAGES - 1] += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(RlEvent {
                index: i,
                label,
                decision: decision.label,
                action,
                delta,
            });
        }
    }
    state.epochs[STAGES - 1] += 1;
    state.rl_tallies.push(tally);
    Ok(tally)
}

/// `epochs` R-STDP epochs. With `opts.adaptive` the reward rule is the base
/// rule scaled by the previous epoch's error rate and the punishment rule
/// by its accuracy (chance level before the first epoch). `on_best` runs
/// whenever an epoch beats the best training accuracy so far.
pub fn train_rl_epochs<T: Scalar, S: SampleSource<T> + ?Sized>(
    net: &mut Network<T>,
    source: &S,
    epochs: usize,
    opts: &RlOptions,
    state: &mut TrainState,
    mut on_best: impl FnMut(&Network<T>, &BestCheckpoint) -> Result<()>,
) -> Result<Vec<EvalTally>> {
    let base_reward = net.config().stages[STAGES - 1].stdp;
    let base_punish = net.config().punish_rule();
    let chance = 1.0 / net.config().classes as f64;
    let mut tallies = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        if opts.adaptive {
            let (wrong, correct) = match state.rl_tallies.last() {
                Some(t) => (t.wrong_rate(), t.accuracy()),
                None => (1.0 - chance, chance),
            };
            net.set_rule(STAGES, base_reward.scaled(wrong))?;
            net.set_punish_rule(base_punish.scaled(correct))?;
        }
        let tally = train_rl(net, source, opts, state)?;
        let epoch = state.epochs[STAGES - 1] - 1;
        log::info!(
            "rl epoch {epoch}: correct {} wrong {} silent {} (accuracy {:.4})",
            tally.correct,
            tally.wrong,
            tally.silent,
            tally.accuracy()
        );
        if state.best.as_ref().is_none_or(|b| tally.accuracy() > b.accuracy) {
            let best = BestCheckpoint {
                epoch,
                accuracy: tally.accuracy(),
                checksum: net.weights_checksum(),
            };
            on_best(net, &best)?;
            state.best = Some(best);
        }
        tallies.push(tally);
    }
    Ok(tallies)
}

/// Per-sample decisions in source order. Samples are sharded across the
/// rayon pool; the result does not depend on the thread count.
pub fn decisions<T: Scalar, S: SampleSource<T> + ?Sized>(net: &Network<T>, source: &S) -> Result<Vec<Decision>> {
    source.check_network(net)?;
    let entry = source.entry_stage();
    let t_max = net.config().t_max;
    (0..source.len())
        .into_par_iter()
        .map(|i| {
            let x = source.spikes(i)?.to_spikewave::<T>(t_max)?;
            net.forward_test_from(entry, &x)
        })
        .collect()
}

/// Test-time tally; never touches the weights.
pub fn evaluate<T: Scalar, S: SampleSource<T> + ?Sized>(net: &Network<T>, source: &S) -> Result<EvalTally> {
    let classes = net.config().classes;
    let mut tally = EvalTally::default();
    for (i, d) in decisions(net, source)?.iter().enumerate() {
        let label = source.label(i);
        check_label(label, classes, i)?;
        tally.record(d, label);
    }
    Ok(tally)
}
