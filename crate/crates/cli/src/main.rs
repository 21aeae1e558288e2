use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spikewave_cli::{dispatch, CacheKind, CliError, CliResult, Command, RunConfig, Weights};

/// Train and evaluate a three-stage spiking digit classifier.
#[derive(Parser, Debug)]
#[command(name = "spikewave", version)]
struct Cli {
    /// Run configuration (TOML). Relative paths inside it resolve against
    /// the file's directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `cache.mode`.
    #[arg(long, global = true, value_enum)]
    cache: Option<CacheKind>,

    /// Overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for encoding and evaluation (default: all cores).
    #[arg(long, global = true)]
    device_threads: Option<usize>,

    #[command(subcommand)]
    command: Phase,
}

#[derive(Subcommand, Debug)]
enum Phase {
    /// Encode and cache both splits.
    Encode,
    /// Write freshly initialised weights.
    Init,
    /// Use `conv1.txt`..`conv3.txt` from a directory as the initial weights.
    ImportWeights {
        #[arg(long)]
        from: PathBuf,
    },
    /// Layer-wise STDP on stage 1 or 2.
    TrainLayer {
        #[arg(long)]
        layer: usize,
    },
    /// R-STDP on the decision stage.
    TrainRl,
    /// Test-set accuracy.
    Eval {
        /// Use the best R-STDP snapshot instead of the last weights.
        #[arg(long)]
        best: bool,
    },
    /// Dump every kernel as a text tensor.
    ExportFeatures {
        #[arg(long)]
        best: bool,
    },
    /// All phases in order, then eval.
    Run,
}

fn weights(best: bool) -> Weights {
    if best {
        Weights::Best
    } else {
        Weights::Last
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <FILE> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(base) = path.parent() {
        cfg.resolve_relative_to(base);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.cache {
        cfg.cache.mode = mode;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(n) = cli.device_threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--device-threads: {e}")))?;
    }
    let command = match cli.command {
        Phase::Encode => Command::Encode,
        Phase::Init => Command::Init,
        Phase::ImportWeights { from } => Command::ImportWeights(from),
        Phase::TrainLayer { layer } => Command::TrainLayer(layer),
        Phase::TrainRl => Command::TrainRl,
        Phase::Eval { best } => Command::Eval(weights(best)),
        Phase::ExportFeatures { best } => Command::ExportFeatures(weights(best)),
        Phase::Run => Command::Run,
    };
    for report in dispatch(&cfg, &command)? {
        println!("{}", report.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
