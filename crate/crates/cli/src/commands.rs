use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use spikewave::idx::LabeledImages;
use spikewave::pipeline::{
    derive_seed, evaluate, weight_file, train_rl_epochs, train_unsupervised, CacheMode, CachedDataset,
    InputTransform, MemorySource, Network, RlOptions, SampleSource, TrainState,
    UnsupervisedOptions, STAGES,
};
use spikewave::plasticity::{convergence_metric, saturation, StdpRule};
use spikewave::textfmt::{save_tensor, write_atomic};
use spikewave::Scalar;

use crate::config::{CacheKind, Precision, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::Reporter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Which weights `eval` and `export-features` read: the most advanced phase
/// checkpoint, or the best R-STDP epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weights {
    #[default]
    Last,
    Best,
}

/// Training phases in the order they must run. Each reads the checkpoint
/// of the one before and writes its own under `<out>/checkpoints/<name>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Init,
    Stage1,
    Stage2,
    Rl,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Init, Phase::Stage1, Phase::Stage2, Phase::Rl];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Stage1 => "train-layer-1",
            Phase::Stage2 => "train-layer-2",
            Phase::Rl => "train-rl",
        }
    }

    fn invocation(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Stage1 => "train-layer --layer 1",
            Phase::Stage2 => "train-layer --layer 2",
            Phase::Rl => "train-rl",
        }
    }

    fn stage(stage: usize) -> Option<Phase> {
        match stage {
            1 => Some(Phase::Stage1),
            2 => Some(Phase::Stage2),
            _ => None,
        }
    }
}

pub fn phase_dir(out: &Path, phase: Phase) -> PathBuf {
    out.join("checkpoints").join(phase.name())
}

pub fn best_dir(out: &Path) -> PathBuf {
    out.join("checkpoints").join("best")
}

fn state_path(dir: &Path) -> PathBuf {
    dir.join("state.json")
}

/// Everything besides the weights that a later phase needs to continue.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    network_sha256: String,
    state: TrainState,
    rules: Vec<StdpRule>,
    punish: StdpRule,
}

fn sha256_json<S: Serialize>(value: &S) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

/// Fingerprint of the parts of a run that shape its results (not paths).
pub fn experiment_sha256(cfg: &RunConfig) -> CliResult<String> {
    sha256_json(&json!({
        "seed": cfg.seed,
        "precision": cfg.precision,
        "train_limit": cfg.data.train_limit,
        "test_limit": cfg.data.test_limit,
        "schedule": cfg.schedule,
        "network": cfg.network,
    }))
}

fn save_checkpoint<T: Scalar>(dir: &Path, net: &Network<T>, state: &TrainState) -> CliResult<()> {
    net.save_weights(dir)?;
    let ck = Checkpoint {
        network_sha256: sha256_json(net.config())?,
        state: state.clone(),
        rules: (1..=STAGES).map(|s| net.rule(s)).collect(),
        punish: net.punish_rule(),
    };
    write_atomic(&state_path(dir), serde_json::to_string_pretty(&ck)?.as_bytes())?;
    Ok(())
}

/// Writes `phase`'s checkpoint and drops every later one, which would
/// otherwise describe a different history.
fn save_phase<T: Scalar>(cfg: &RunConfig, phase: Phase, net: &Network<T>, state: &TrainState) -> CliResult<()> {
    for later in Phase::ALL.into_iter().filter(|p| *p > phase) {
        remove_dir(&phase_dir(&cfg.out, later))?;
    }
    if phase < Phase::Rl {
        remove_dir(&best_dir(&cfg.out))?;
    }
    save_checkpoint(&phase_dir(&cfg.out, phase), net, state)
}

fn remove_dir(dir: &Path) -> CliResult<()> {
    match fs::remove_dir_all(dir) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_checkpoint<T: Scalar>(cfg: &RunConfig, dir: &Path, hint: &str) -> CliResult<(Network<T>, TrainState)> {
    let path = state_path(dir);
    if !path.exists() {
        return Err(CliError::missing(path, hint));
    }
    let ck: Checkpoint = serde_json::from_slice(&fs::read(&path)?)?;
    if ck.network_sha256 != sha256_json(&cfg.network)? {
        return Err(CliError::Config(format!(
            "{} was written for a different network configuration",
            path.display()
        )));
    }
    let mut net = Network::load_weights(cfg.network.clone(), dir)?;
    for (s, rule) in ck.rules.iter().enumerate() {
        net.set_rule(s + 1, *rule)?;
    }
    net.set_punish_rule(ck.punish)?;
    Ok((net, ck.state))
}

fn load_phase<T: Scalar>(cfg: &RunConfig, phase: Phase) -> CliResult<(Network<T>, TrainState)> {
    // point at the earliest gap in the chain
    let first_missing = Phase::ALL
        .into_iter()
        .filter(|p| *p <= phase)
        .find(|p| !state_path(&phase_dir(&cfg.out, *p)).exists())
        .unwrap_or(phase);
    let hint = format!("run `{}` first", first_missing.invocation());
    load_checkpoint(cfg, &phase_dir(&cfg.out, phase), &hint)
}

/// The most advanced checkpoint present.
fn load_latest<T: Scalar>(cfg: &RunConfig) -> CliResult<(Phase, Network<T>)> {
    for phase in Phase::ALL.into_iter().rev() {
        if state_path(&phase_dir(&cfg.out, phase)).exists() {
            return Ok((phase, load_phase(cfg, phase)?.0));
        }
    }
    load_phase::<T>(cfg, Phase::Init).map(|(net, _)| (Phase::Init, net))
}

pub fn dataset<T: Scalar>(cfg: &RunConfig, split: Split) -> CliResult<CachedDataset<T>> {
    let d = &cfg.data;
    let (images, labels, limit) = match split {
        Split::Train => (&d.train_images, &d.train_labels, d.train_limit),
        Split::Test => (&d.test_images, &d.test_labels, d.test_limit),
    };
    for p in [images, labels] {
        if !p.exists() {
            return Err(CliError::missing(p.clone(), "dataset file not found (see scripts/fetch-mnist.sh)"));
        }
    }
    let data = LabeledImages::load(images, labels, limit)?;
    let labels: Vec<usize> = data.labels.iter().map(|&l| usize::from(l)).collect();
    if let Some(bad) = labels.iter().find(|&&l| l >= cfg.network.classes) {
        return Err(CliError::Config(format!(
            "{} contains label {bad} but the network has {} classes",
            labels_name(split),
            cfg.network.classes
        )));
    }
    let transform = InputTransform::new(&cfg.network.encoding, cfg.network.t_max)?;
    let mode = match cfg.cache.mode {
        CacheKind::Memory => CacheMode::Memory,
        CacheKind::Disk => CacheMode::Disk(cfg.cache_dir().join(split.name())),
    };
    Ok(CachedDataset::new(transform, data.images, labels, mode)?)
}

fn labels_name(split: Split) -> &'static str {
    match split {
        Split::Train => "data.train_labels",
        Split::Test => "data.test_labels",
    }
}

fn start(cfg: &RunConfig, command: &str, report: &str) -> CliResult<Reporter> {
    let mut rep = Reporter::new(&cfg.out, report);
    rep.record(
        "run",
        json!({
            "command": command,
            "seed": cfg.seed,
            "precision": cfg.precision,
            "config_sha256": experiment_sha256(cfg)?,
        }),
    );
    rep.note(&format!("== {command} (seed {})", cfg.seed));
    Ok(rep)
}

/// Encodes both splits, filling the cache.
pub fn cmd_encode<T: Scalar>(cfg: &RunConfig) -> CliResult<PathBuf> {
    let mut rep = start(cfg, "encode", "encode")?;
    for split in [Split::Train, Split::Test] {
        let ds = dataset::<T>(cfg, split)?;
        ds.prefetch()?;
        let spikes: usize = (0..ds.len())
            .map(|i| ds.spikes(i).map(|s| s.spike_count()))
            .sum::<spikewave::Result<usize>>()?;
        let mean = spikes as f64 / ds.len().max(1) as f64;
        rep.note(&format!("{}: {} samples, {mean:.1} spikes each", split.name(), ds.len()));
        rep.record(
            "encode",
            json!({
                "split": split.name(),
                "samples": ds.len(),
                "fingerprint": ds.transform().fingerprint(),
                "mean_spikes": mean,
            }),
        );
    }
    rep.finish()
}

/// Fresh weights from the configured seed.
pub fn cmd_init<T: Scalar>(cfg: &RunConfig) -> CliResult<PathBuf> {
    let mut rep = start(cfg, "init", "init")?;
    let net = Network::<T>::new(cfg.network.clone(), cfg.seed)?;
    save_phase(cfg, Phase::Init, &net, &TrainState::default())?;
    rep.record("init", json!({ "checksum": net.weights_checksum() }));
    rep.finish()
}

/// Replaces the initial weights with `conv{1,2,3}.txt` from `dir`.
pub fn cmd_import_weights<T: Scalar>(cfg: &RunConfig, dir: &Path) -> CliResult<PathBuf> {
    let mut rep = start(cfg, "import-weights", "import-weights")?;
    for stage in 1..=STAGES {
        let file = dir.join(weight_file(stage));
        if !file.exists() {
            return Err(CliError::missing(file, "expected one text tensor per stage"));
        }
    }
    let net = Network::<T>::load_weights(cfg.network.clone(), dir)?;
    save_phase(cfg, Phase::Init, &net, &TrainState::default())?;
    rep.record("init", json!({ "checksum": net.weights_checksum() }));
    rep.finish()
}

/// Layer-wise STDP on stage 1 or 2.
pub fn cmd_train_layer<T: Scalar>(cfg: &RunConfig, stage: usize) -> CliResult<PathBuf> {
    if !(1..STAGES).contains(&stage) {
        return Err(CliError::Config(format!(
            "train-layer takes stage 1 or 2; stage {STAGES} is trained by train-rl"
        )));
    }
    let name = format!("train-layer-{stage}");
    let mut rep = start(cfg, &name, &name)?;
    let phase = Phase::stage(stage).expect("checked above");
    let previous = Phase::ALL[phase as usize - 1];
    let (mut net, mut state) = load_phase::<T>(cfg, previous)?;
    let data = dataset::<T>(cfg, Split::Train)?;
    // earlier stages are frozen: run them once and train on their output
    let prefix;
    let source: &dyn SampleSource<T> = if stage > 1 {
        prefix = MemorySource::from_prefix(&net, &data, stage)?;
        &prefix
    } else {
        &data
    };
    let opts = UnsupervisedOptions {
        shuffle_seed: cfg.schedule.shuffle.then(|| derive_seed(cfg.seed, "shuffle")),
        schedule: cfg.schedule.lr_schedule,
    };
    let epochs = if stage == 1 {
        cfg.schedule.stage1_epochs
    } else {
        cfg.schedule.stage2_epochs
    };
    let rule_bounds = cfg.network.stages[stage - 1].stdp;
    for _ in 0..epochs {
        let c = train_unsupervised(&mut net, source, stage, 1, &opts, &mut state)?[0];
        let w = net.layer(stage).weights();
        let sat = saturation(w, rule_bounds.lower_bound, rule_bounds.upper_bound, 0.1);
        let rule = net.rule(stage);
        let epoch = state.epochs[stage - 1] - 1;
        rep.note(&format!("stage {stage} epoch {epoch}: C = {c:.6}, {:.1}% near bounds", 100.0 * sat));
        rep.record(
            "stage_epoch",
            json!({
                "stage": stage,
                "epoch": epoch,
                "samples": state.samples[stage - 1],
                "convergence": c,
                "saturation": sat,
                "a_plus": rule.a_plus,
                "a_minus": rule.a_minus,
            }),
        );
    }
    save_phase(cfg, phase, &net, &state)?;
    rep.record("checkpoint", json!({ "phase": name, "checksum": net.weights_checksum() }));
    rep.finish()
}

/// R-STDP on the decision stage; snapshots the best epoch into `best/`.
pub fn cmd_train_rl<T: Scalar>(cfg: &RunConfig) -> CliResult<PathBuf> {
    let mut rep = start(cfg, "train-rl", "train-rl")?;
    let (mut net, mut state) = load_phase::<T>(cfg, Phase::Stage2)?;
    remove_dir(&best_dir(&cfg.out))?;
    let data = dataset::<T>(cfg, Split::Train)?;
    let cache = MemorySource::from_prefix(&net, &data, STAGES)?;
    drop(data);
    let opts = RlOptions {
        shuffle_seed: cfg.schedule.shuffle.then(|| derive_seed(cfg.seed, "shuffle")),
        adaptive: cfg.schedule.adaptive_rl,
    };
    let best_path = best_dir(&cfg.out);
    for _ in 0..cfg.schedule.rl_epochs {
        let mut best_rec = None;
        let tally = train_rl_epochs(&mut net, &cache, 1, &opts, &mut state, |n, best| {
            save_checkpoint(&best_path, n, &TrainState::default())
                .map_err(|e| spikewave::Error::InvalidArgument(e.to_string()))?;
            best_rec = Some(best.clone());
            Ok(())
        })?[0];
        let epoch = state.epochs[STAGES - 1] - 1;
        rep.note(&format!(
            "rl epoch {epoch}: {} correct, {} wrong, {} silent ({:.2}%)",
            tally.correct,
            tally.wrong,
            tally.silent,
            100.0 * tally.accuracy()
        ));
        rep.record(
            "rl_epoch",
            json!({
                "epoch": epoch,
                "correct": tally.correct,
                "wrong": tally.wrong,
                "silent": tally.silent,
                "accuracy": tally.accuracy(),
                "a_plus": net.rule(STAGES).a_plus,
                "punish_a_plus": net.punish_rule().a_plus,
            }),
        );
        if let Some(b) = best_rec {
            rep.record(
                "best",
                json!({ "epoch": b.epoch, "accuracy": b.accuracy, "checksum": b.checksum }),
            );
        }
    }
    save_phase(cfg, Phase::Rl, &net, &state)?;
    rep.record("checkpoint", json!({ "phase": "train-rl", "checksum": net.weights_checksum() }));
    rep.finish()
}

/// Test-set tally with the latest or the best weights. Never writes weights.
pub fn cmd_eval<T: Scalar>(cfg: &RunConfig, weights: Weights) -> CliResult<PathBuf> {
    let name = match weights {
        Weights::Last => "eval".to_string(),
        Weights::Best => "eval-best".to_string(),
    };
    let mut rep = start(cfg, &name, &name)?;
    let (source, net) = load_weights::<T>(cfg, weights)?;
    let data = dataset::<T>(cfg, Split::Test)?;
    let tally = evaluate(&net, &data)?;
    rep.note(&format!(
        "test ({source} weights): {} correct, {} wrong, {} silent; accuracy {:.2}%, silent {:.2}%",
        tally.correct,
        tally.wrong,
        tally.silent,
        100.0 * tally.accuracy(),
        100.0 * tally.silent_rate()
    ));
    rep.record(
        "eval",
        json!({
            "split": "test",
            "weights": source,
            "checksum": net.weights_checksum(),
            "correct": tally.correct,
            "wrong": tally.wrong,
            "silent": tally.silent,
            "samples": tally.total(),
            "accuracy": tally.accuracy(),
            "silent_rate": tally.silent_rate(),
        }),
    );
    rep.finish()
}

/// The requested weights and the name of the checkpoint they came from.
fn load_weights<T: Scalar>(cfg: &RunConfig, weights: Weights) -> CliResult<(&'static str, Network<T>)> {
    match weights {
        Weights::Last => load_latest(cfg).map(|(phase, net)| (phase.name(), net)),
        Weights::Best => load_checkpoint(cfg, &best_dir(&cfg.out), "no best snapshot yet; run `train-rl` first")
            .map(|(net, _)| ("best", net)),
    }
}

/// Writes every kernel as `<out>/features/conv<s>/feature_<f>.txt`.
pub fn cmd_export_features<T: Scalar>(cfg: &RunConfig, weights: Weights) -> CliResult<PathBuf> {
    let mut rep = start(cfg, "export-features", "export-features")?;
    let (source, net) = load_weights::<T>(cfg, weights)?;
    for stage in 1..=STAGES {
        let dir = format!("conv{stage}");
        let layer = net.layer(stage);
        for f in 0..layer.out_features() {
            let path = cfg.out.join("features").join(&dir).join(format!("feature_{f:03}.txt"));
            save_tensor(layer.feature(f).view().into_dyn(), &path)?;
        }
        let bounds = cfg.network.stages[stage - 1].stdp;
        rep.record(
            "features",
            json!({
                "stage": stage,
                "weights": source,
                "features": layer.out_features(),
                "dir": format!("features/{dir}"),
                "convergence": convergence_metric(layer.weights()),
                "saturation": saturation(layer.weights(), bounds.lower_bound, bounds.upper_bound, 0.1),
            }),
        );
    }
    rep.finish()
}

/// init → encode → stage 1 → stage 2 → R-STDP → eval.
pub fn cmd_run<T: Scalar>(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    Ok(vec![
        cmd_init::<T>(cfg)?,
        cmd_encode::<T>(cfg)?,
        cmd_train_layer::<T>(cfg, 1)?,
        cmd_train_layer::<T>(cfg, 2)?,
        cmd_train_rl::<T>(cfg)?,
        cmd_eval::<T>(cfg, Weights::Last)?,
    ])
}

#[derive(Debug, Clone)]
pub enum Command {
    Encode,
    Init,
    ImportWeights(PathBuf),
    TrainLayer(usize),
    TrainRl,
    Eval(Weights),
    ExportFeatures(Weights),
    Run,
}

/// Runs `command` with the scalar type chosen in the config.
pub fn dispatch(cfg: &RunConfig, command: &Command) -> CliResult<Vec<PathBuf>> {
    match cfg.precision {
        Precision::F32 => dispatch_as::<f32>(cfg, command),
        Precision::F64 => dispatch_as::<f64>(cfg, command),
    }
}

fn dispatch_as<T: Scalar>(cfg: &RunConfig, command: &Command) -> CliResult<Vec<PathBuf>> {
    Ok(match command {
        Command::Encode => vec![cmd_encode::<T>(cfg)?],
        Command::Init => vec![cmd_init::<T>(cfg)?],
        Command::ImportWeights(dir) => vec![cmd_import_weights::<T>(cfg, dir)?],
        Command::TrainLayer(s) => vec![cmd_train_layer::<T>(cfg, *s)?],
        Command::TrainRl => vec![cmd_train_rl::<T>(cfg)?],
        Command::Eval(w) => vec![cmd_eval::<T>(cfg, *w)?],
        Command::ExportFeatures(w) => vec![cmd_export_features::<T>(cfg, *w)?],
        Command::Run => cmd_run::<T>(cfg)?,
    })
}
