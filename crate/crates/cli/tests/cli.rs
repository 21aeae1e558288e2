use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use ndarray::Array3;
use serde_json::Value;
use spikewave::idx::{encode_images, encode_labels};
use spikewave::textfmt::load_tensor;
use spikewave_cli::config::{CacheConfig, DataConfig, ScheduleConfig};
use spikewave_cli::{dispatch, CacheKind, CliError, Command, Precision, RunConfig, Weights};
use tempfile::TempDir;

/// A bar through the centre whose angle depends on the label, shifted a
/// little per sample.
fn draw(label: u8, i: usize) -> [[u8; 28]; 28] {
    let mut img = [[0u8; 28]; 28];
    let angle = f64::from(label) * std::f64::consts::PI / 10.0;
    let (dy, dx) = angle.sin_cos();
    let shift = (i % 3) as f64 - 1.0;
    for step in -10..=10 {
        let t = f64::from(step);
        let y = (14.0 + shift + t * dy).round() as isize;
        let x = (14.0 + shift + t * dx).round() as isize;
        for (oy, ox) in [(0, 0), (1, 0), (0, 1)] {
            let (yy, xx) = (y + oy, x + ox);
            if (0..28).contains(&yy) && (0..28).contains(&xx) {
                img[yy as usize][xx as usize] = 255;
            }
        }
    }
    img
}

fn write_split(dir: &Path, name: &str, n: usize, offset: usize) -> (PathBuf, PathBuf) {
    let labels: Vec<u8> = (0..n).map(|i| ((i + offset) % 10) as u8).collect();
    let mut images = Array3::<u8>::zeros((n, 28, 28));
    for (i, &l) in labels.iter().enumerate() {
        for (y, row) in draw(l, i + offset).iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                images[[i, y, x]] = v;
            }
        }
    }
    let ip = dir.join(format!("{name}-images-idx3-ubyte"));
    let lp = dir.join(format!("{name}-labels-idx1-ubyte"));
    fs::write(&ip, encode_images(&images)).unwrap();
    fs::write(&lp, encode_labels(&labels)).unwrap();
    (ip, lp)
}

struct Fixture {
    dir: TempDir,
    cfg: RunConfig,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let (train_images, train_labels) = write_split(dir.path(), "train", 30, 0);
    let (test_images, test_labels) = write_split(dir.path(), "test", 12, 5);
    let cfg = RunConfig {
        seed: 7,
        out: dir.path().join("out"),
        precision: Precision::F32,
        data: DataConfig {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit: None,
            test_limit: None,
        },
        cache: CacheConfig::default(),
        schedule: ScheduleConfig {
            stage1_epochs: 1,
            stage2_epochs: 1,
            rl_epochs: 2,
            ..ScheduleConfig::default()
        },
        network: spikewave::pipeline::NetworkConfig::mnist_default(),
    };
    Fixture { dir, cfg }
}

fn records(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn reports(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(out.join("reports"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn precondition(err: CliError) -> PathBuf {
    match err {
        CliError::Precondition { artifact, .. } => artifact,
        other => panic!("expected a precondition error, got {other}"),
    }
}

#[test]
fn phases_refuse_to_run_out_of_order() {
    let f = fixture();
    let cfg = &f.cfg;
    let missing = precondition(dispatch(cfg, &Command::TrainLayer(1)).unwrap_err());
    assert!(missing.ends_with("checkpoints/init/state.json"));
    let missing = precondition(dispatch(cfg, &Command::Eval(Weights::Last)).unwrap_err());
    assert!(missing.ends_with("checkpoints/init/state.json"));

    dispatch(cfg, &Command::Init).unwrap();
    let missing = precondition(dispatch(cfg, &Command::TrainLayer(2)).unwrap_err());
    assert!(missing.ends_with("checkpoints/train-layer-1/state.json"));
    let missing = precondition(dispatch(cfg, &Command::TrainRl).unwrap_err());
    assert!(missing.ends_with("checkpoints/train-layer-2/state.json"));
    let missing = precondition(dispatch(cfg, &Command::Eval(Weights::Best)).unwrap_err());
    assert!(missing.ends_with("checkpoints/best/state.json"));

    assert!(matches!(dispatch(cfg, &Command::TrainLayer(3)), Err(CliError::Config(_))));
}

#[test]
fn full_run_reports_a_consistent_tally() {
    let f = fixture();
    let out = dispatch(&f.cfg, &Command::Run).unwrap();
    let names: Vec<_> = out.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(
        names,
        ["init.jsonl", "encode.jsonl", "train-layer-1.jsonl", "train-layer-2.jsonl", "train-rl.jsonl", "eval.jsonl"]
    );

    let eval = records(&f.cfg.out.join("reports/eval.jsonl"));
    assert_eq!(eval[0]["record"], "run");
    let e = &eval[1];
    assert_eq!(e["record"], "eval");
    let sum = e["correct"].as_u64().unwrap() + e["wrong"].as_u64().unwrap() + e["silent"].as_u64().unwrap();
    assert_eq!(sum, 12);
    assert_eq!(e["samples"], 12);
    assert_eq!(e["weights"], "train-rl");

    let rl = records(&f.cfg.out.join("reports/train-rl.jsonl"));
    let epochs: Vec<_> = rl.iter().filter(|r| r["record"] == "rl_epoch").collect();
    assert_eq!(epochs.len(), 2);
    for r in &epochs {
        let sum = r["correct"].as_u64().unwrap() + r["wrong"].as_u64().unwrap() + r["silent"].as_u64().unwrap();
        assert_eq!(sum, 30);
    }
    // the first epoch always beats "no best yet"
    assert!(rl.iter().any(|r| r["record"] == "best" && r["epoch"] == 0));

    // eval on the best snapshot only reads weights
    let before = fs::read(f.cfg.out.join("checkpoints/train-rl/conv3.txt")).unwrap();
    dispatch(&f.cfg, &Command::Eval(Weights::Best)).unwrap();
    assert_eq!(fs::read(f.cfg.out.join("checkpoints/train-rl/conv3.txt")).unwrap(), before);
    let best = records(&f.cfg.out.join("reports/eval-best.jsonl"));
    assert_eq!(best[1]["weights"], "best");
}

#[test]
fn same_seed_same_bytes_across_cache_modes() {
    let a = fixture();
    let mut b_cfg = a.cfg.clone();
    b_cfg.out = a.dir.path().join("out-disk");
    b_cfg.cache = CacheConfig {
        mode: CacheKind::Disk,
        dir: None,
    };
    dispatch(&a.cfg, &Command::Run).unwrap();
    dispatch(&b_cfg, &Command::Run).unwrap();
    assert!(b_cfg.cache_dir().join("train/manifest.json").exists());
    assert_eq!(reports(&a.cfg.out), reports(&b_cfg.out));
    for s in 1..=3 {
        let name = format!("checkpoints/train-rl/conv{s}.txt");
        assert_eq!(fs::read(a.cfg.out.join(&name)).unwrap(), fs::read(b_cfg.out.join(&name)).unwrap());
    }
}

#[test]
fn rerunning_a_phase_reproduces_it() {
    let f = fixture();
    let cfg = &f.cfg;
    dispatch(cfg, &Command::Init).unwrap();
    dispatch(cfg, &Command::TrainLayer(1)).unwrap();
    dispatch(cfg, &Command::TrainLayer(2)).unwrap();
    let report = cfg.out.join("reports/train-layer-1.jsonl");
    let weights = cfg.out.join("checkpoints/train-layer-1/conv1.txt");
    let (r1, w1) = (fs::read(&report).unwrap(), fs::read(&weights).unwrap());

    dispatch(cfg, &Command::TrainLayer(1)).unwrap();
    assert_eq!(fs::read(&report).unwrap(), r1);
    assert_eq!(fs::read(&weights).unwrap(), w1);
    // later phases were built on the old checkpoint and are dropped
    assert!(!cfg.out.join("checkpoints/train-layer-2").exists());
    assert!(matches!(dispatch(cfg, &Command::TrainRl), Err(CliError::Precondition { .. })));
}

#[test]
fn eval_works_on_untrained_weights() {
    let f = fixture();
    dispatch(&f.cfg, &Command::Init).unwrap();
    dispatch(&f.cfg, &Command::Eval(Weights::Last)).unwrap();
    let e = &records(&f.cfg.out.join("reports/eval.jsonl"))[1];
    assert_eq!(e["weights"], "init");
    assert_eq!(e["samples"], 12);
}

#[test]
fn imported_weights_evaluate_like_the_originals() {
    let f = fixture();
    dispatch(&f.cfg, &Command::Run).unwrap();
    let mut other = f.cfg.clone();
    other.out = f.dir.path().join("imported");
    let src = f.cfg.out.join("checkpoints/train-rl");
    dispatch(&other, &Command::ImportWeights(src)).unwrap();
    dispatch(&other, &Command::Eval(Weights::Last)).unwrap();
    let a = &records(&f.cfg.out.join("reports/eval.jsonl"))[1];
    let b = &records(&other.out.join("reports/eval.jsonl"))[1];
    for key in ["checksum", "correct", "wrong", "silent"] {
        assert_eq!(a[key], b[key], "{key}");
    }

    let missing = precondition(dispatch(&other, &Command::ImportWeights(f.dir.path().to_path_buf())).unwrap_err());
    assert!(missing.ends_with("conv1.txt"));
}

#[test]
fn different_seed_different_weights() {
    let a = fixture();
    let mut b = a.cfg.clone();
    b.seed += 1;
    b.out = a.dir.path().join("other");
    dispatch(&a.cfg, &Command::Init).unwrap();
    dispatch(&b, &Command::Init).unwrap();
    assert_ne!(reports(&a.cfg.out), reports(&b.out));
}

#[test]
fn double_precision_runs_end_to_end() {
    let mut f = fixture();
    f.cfg.precision = Precision::F64;
    f.cfg.schedule.rl_epochs = 1;
    dispatch(&f.cfg, &Command::Run).unwrap();
    let run = &records(&f.cfg.out.join("reports/eval.jsonl"))[0];
    assert_eq!(run["precision"], "f64");
}

#[test]
fn exported_features_match_layer_shapes() {
    let f = fixture();
    dispatch(&f.cfg, &Command::Init).unwrap();
    dispatch(&f.cfg, &Command::ExportFeatures(Weights::Last)).unwrap();
    let cfg = &f.cfg.network;
    for (s, stage) in cfg.stages.iter().enumerate() {
        let dir = f.cfg.out.join(format!("features/conv{}", s + 1));
        assert_eq!(fs::read_dir(&dir).unwrap().count(), stage.out_features);
        let k = load_tensor::<f32>(&dir.join("feature_000.txt")).unwrap();
        assert_eq!(k.shape(), [stage.in_features, stage.kernel, stage.kernel]);
    }
}

#[test]
fn checkpoint_from_another_network_is_rejected() {
    let f = fixture();
    dispatch(&f.cfg, &Command::Init).unwrap();
    let mut other = f.cfg.clone();
    other.network.stages[0].threshold = Some(99.0);
    assert!(matches!(dispatch(&other, &Command::TrainLayer(1)), Err(CliError::Config(_))));
}

fn binary(f: &Fixture, args: &[&str]) -> std::process::Output {
    let path = f.dir.path().join("run.toml");
    fs::write(&path, toml::to_string(&f.cfg).unwrap()).unwrap();
    Process::new(env!("CARGO_BIN_EXE_spikewave"))
        .arg("--config")
        .arg(&path)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn binary_exits_nonzero_on_precondition() {
    let f = fixture();
    let out = binary(&f, &["train-rl"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("checkpoints/train-layer-2/state.json"), "{stderr}");
    assert!(stderr.contains("run `init` first"), "{stderr}");
}

#[test]
fn thread_count_does_not_change_results() {
    let f = fixture();
    let one = f.dir.path().join("t1");
    let four = f.dir.path().join("t4");
    for (dir, threads) in [(&one, "1"), (&four, "4")] {
        let out = binary(&f, &["--out", dir.to_str().unwrap(), "--device-threads", threads, "run"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(reports(&one), reports(&four));
}

#[test]
fn flags_override_the_file() {
    let f = fixture();
    let out = f.dir.path().join("flagged");
    let res = binary(&f, &["--seed", "99", "--cache", "disk", "--out", out.to_str().unwrap(), "init"]);
    assert!(res.status.success());
    let init = records(&out.join("reports/init.jsonl"));
    assert_eq!(init[0]["seed"], 99);
}
