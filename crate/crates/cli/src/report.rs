//! Line-delimited JSON reports and the human-readable log.
//!
//! Every record is an object whose `record` field names its kind:
//!
//! | record        | fields                                                          |
//! |---------------|-----------------------------------------------------------------|
//! | `run`         | `command`, `seed`, `precision`, `config_sha256`                 |
//! | `encode`      | `split`, `samples`, `fingerprint`, `mean_spikes`                |
//! | `init`        | `checksum` (also written by `import-weights`)                   |
//! | `stage_epoch` | `stage`, `epoch`, `samples`, `convergence`, `saturation`, `a_plus`, `a_minus` |
//! | `rl_epoch`    | `epoch`, `correct`, `wrong`, `silent`, `accuracy`, `a_plus`, `punish_a_plus` |
//! | `best`        | `epoch`, `accuracy`, `checksum`                                 |
//! | `eval`        | `split`, `weights`, `checksum`, `correct`, `wrong`, `silent`, `samples`, `accuracy`, `silent_rate` |
//! | `features`    | `stage`, `weights`, `features`, `dir`, `convergence`, `saturation` |
//! | `checkpoint`  | `phase`, `checksum`                                             |
//!
//! `weights` names the checkpoint that was read (`init`, `train-layer-1`,
//! `train-layer-2`, `train-rl` or `best`).
//!
//! Reports contain no timings or absolute paths, so reruns with the same
//! seed produce identical bytes.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use spikewave::textfmt::write_atomic;

use crate::error::CliResult;

pub struct Reporter {
    path: PathBuf,
    log: PathBuf,
    lines: Vec<String>,
}

impl Reporter {
    /// Collects records for `<out>/reports/<name>.jsonl`.
    pub fn new(out: &Path, name: &str) -> Self {
        Self {
            path: out.join("reports").join(format!("{name}.jsonl")),
            log: out.join("log.txt"),
            lines: Vec::new(),
        }
    }

    pub fn record(&mut self, kind: &str, fields: Value) {
        let mut obj = json!({ "record": kind });
        if let (Some(o), Value::Object(f)) = (obj.as_object_mut(), fields) {
            o.extend(f);
        }
        self.lines.push(obj.to_string());
    }

    pub fn records(&self) -> &[String] {
        &self.lines
    }

    /// Logs to stderr and appends to `<out>/log.txt`.
    pub fn note(&self, msg: &str) {
        log::info!("{msg}");
        let write = || -> std::io::Result<()> {
            if let Some(dir) = self.log.parent() {
                fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(&self.log)?;
            writeln!(f, "{msg}")
        };
        if let Err(e) = write() {
            log::warn!("cannot write {}: {e}", self.log.display());
        }
    }

    /// Writes the report atomically and returns its path.
    pub fn finish(self) -> CliResult<PathBuf> {
        let mut text = self.lines.join("\n");
        text.push('\n');
        write_atomic(&self.path, text.as_bytes())?;
        Ok(self.path)
    }
}
