//! Command-line front end: `gen`, `train`, `benchmark`, `micro`, `analyze`,
//! `report`. Configuration layers are profile, then `--config` file (TOML),
//! then flags; `--manifest` replaces the profile with a previous run's
//! configuration.

pub mod commands;
pub mod config;
pub mod run;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_analyze, cmd_benchmark, cmd_gen, cmd_micro, cmd_report, cmd_train, AnalyzeKind, CurveGroup, CurveSummary,
    SlopeRow,
};
pub use config::{resolve, resolve_from, AnalysisConfig, MicroConfig, Profile, RunConfig};
pub use run::{RunDir, RunManifest};

use crate::bench::ExperimentMode;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "graspmeta", version, about = "Meta-learning under object-group shift on a synthetic grasp world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic grasp dataset.
    Gen,
    /// Train baseline and meta-learner on one Ω split and save checkpoints.
    Train,
    /// Sweep Ω for every seed and test the relative-error slopes.
    Benchmark,
    /// Frozen-training-split series for each training size.
    Micro,
    /// Run an analysis on existing artifacts.
    Analyze {
        #[arg(value_enum)]
        kind: AnalyzeKind,
    },
    /// Collect run summaries into a markdown report.
    Report,
    /// Print the resolved configuration as TOML.
    PrintConfig,
}

#[derive(Debug, Args)]
pub struct Options {
    /// Base settings before the config file and flags apply.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Full)]
    pub profile: Profile,
    /// Shorthand for `--profile smoke`.
    #[arg(long, global = true)]
    pub smoke: bool,
    /// TOML file overriding the profile.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Start from the configuration recorded in a run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Override any config field by dotted path, e.g. `experiment.inner.steps=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,

    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub omegas: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub omega: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,

    #[arg(long, global = true)]
    pub inner_steps: Option<usize>,
    #[arg(long, global = true)]
    pub inner_lr: Option<f64>,
    #[arg(long, global = true)]
    pub head_only: Option<bool>,
    #[arg(long, global = true)]
    pub learnable_lr: Option<bool>,
    /// Memorization regularizer weight; `none` removes it.
    #[arg(long, global = true)]
    pub regularizer_weight: Option<String>,
    #[arg(long, global = true)]
    pub meta_lr: Option<f64>,
    #[arg(long, global = true)]
    pub meta_batch: Option<usize>,
    #[arg(long, global = true)]
    pub meta_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub msl: Option<bool>,
    #[arg(long, global = true)]
    pub da_threshold: Option<usize>,
    #[arg(long, global = true)]
    pub baseline_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub baseline_lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub q: Option<usize>,
    #[arg(long, global = true)]
    pub eval_runs: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub body_layers: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub head_layers: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub target_scale: Option<f64>,

    #[arg(long, global = true)]
    pub objects: Option<usize>,
    #[arg(long, global = true)]
    pub sequences_per_object: Option<usize>,
    #[arg(long, global = true)]
    pub frames_per_sequence: Option<usize>,
    #[arg(long, global = true)]
    pub dataset_seed: Option<u64>,

    #[arg(long, global = true, value_delimiter = ',')]
    pub micro_sizes: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub micro_seeds: Option<Vec<u64>>,
    /// `train` run directory for `analyze embed|gradnorm`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Second `train` run directory for `analyze gradnorm`.
    #[arg(long, global = true)]
    pub checkpoint_b: Option<PathBuf>,
    /// `benchmark` or `micro` run directory for `analyze slopes`.
    #[arg(long, global = true)]
    pub results: Option<PathBuf>,
    /// Run directories for `report`.
    #[arg(long = "input", global = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    HandOnly,
    Joint,
}

impl From<ModeArg> for ExperimentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::HandOnly => ExperimentMode::HandOnly,
            ModeArg::Joint => ExperimentMode::Joint,
        }
    }
}

fn tv<T: serde::Serialize>(v: &T) -> Result<toml::Value> {
    toml::Value::try_from(v).map_err(|e| Error::Toml(e.to_string()))
}

impl Options {
    /// Typed flags and `--set` pairs as dotted-path overrides; `--set`
    /// entries come last and win.
    pub fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        let mut out: Vec<(String, toml::Value)> = Vec::new();
        macro_rules! flag {
            ($field:expr, $path:literal) => {
                if let Some(v) = &$field {
                    out.push(($path.to_string(), tv(v)?));
                }
            };
        }
        flag!(self.data_dir, "data_dir");
        flag!(self.out_dir, "out_dir");
        flag!(self.run_id, "run_id");
        flag!(self.seeds, "seeds");
        flag!(self.omegas, "omegas");
        flag!(self.omega, "omega");
        if let Some(m) = self.mode {
            out.push(("experiment.mode".into(), tv(&ExperimentMode::from(m))?));
        }
        flag!(self.inner_steps, "experiment.inner.steps");
        flag!(self.inner_lr, "experiment.inner.base_lr");
        flag!(self.head_only, "experiment.inner.head_only");
        flag!(self.learnable_lr, "experiment.inner.learnable_lr");
        flag!(self.meta_lr, "experiment.outer.meta_lr");
        flag!(self.meta_batch, "experiment.outer.meta_batch");
        flag!(self.meta_epochs, "experiment.outer.epochs");
        flag!(self.msl, "experiment.outer.msl");
        flag!(self.da_threshold, "experiment.outer.da_threshold");
        flag!(self.baseline_epochs, "experiment.baseline.epochs");
        flag!(self.baseline_lr, "experiment.baseline.lr");
        flag!(self.batch_size, "experiment.baseline.batch_size");
        flag!(self.k, "experiment.task.k");
        flag!(self.q, "experiment.task.q");
        flag!(self.eval_runs, "experiment.eval_runs");
        flag!(self.body_layers, "experiment.body_layers");
        flag!(self.head_layers, "experiment.head_layers");
        flag!(self.target_scale, "experiment.target_scale");
        flag!(self.objects, "dataset.n_objects");
        flag!(self.sequences_per_object, "dataset.sequences_per_object");
        flag!(self.frames_per_sequence, "dataset.frames_per_sequence");
        flag!(self.dataset_seed, "dataset.seed");
        flag!(self.micro_sizes, "micro.train_sizes");
        flag!(self.micro_seeds, "micro.seeds");
        flag!(self.checkpoint, "analysis.checkpoint");
        flag!(self.checkpoint_b, "analysis.checkpoint_b");
        flag!(self.results, "analysis.results");
        if !self.inputs.is_empty() {
            out.push(("analysis.inputs".into(), tv(&self.inputs)?));
        }
        for raw in &self.sets {
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {raw:?}")))?;
            out.push((k.trim().to_string(), config::parse_value(v.trim())));
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut overrides = self.overrides()?;
        let reg = self.regularizer_weight.as_deref();
        let base = match &self.manifest {
            Some(p) => RunManifest::read(p)?.config,
            None => RunConfig::profile(if self.smoke { Profile::Smoke } else { self.profile }),
        };
        let mut cfg = resolve_from(base, self.config.as_deref(), &overrides)?;
        // TOML has no null, so removing the regularizer is a flag of its own.
        match reg {
            None => {}
            Some("none") => cfg.experiment.inner.regularizer_weight = None,
            Some(w) => {
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::Config(format!("--regularizer-weight expects a number or `none`, got {w:?}")))?;
                overrides.push(("experiment.inner.regularizer_weight".into(), toml::Value::Float(w)));
                cfg = resolve_from(cfg, None, &overrides)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit code for an error kind.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Toml(_) => 2,
        Error::MissingArtifact { .. } => 3,
        Error::Io { .. } => 4,
        _ => 1,
    }
}

pub fn error_json(e: &Error) -> serde_json::Value {
    let mut v = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    if let Error::MissingArtifact { path, prerequisite } = e {
        v["error"]["path"] = serde_json::json!(path);
        v["error"]["prerequisite"] = serde_json::json!(prerequisite);
    }
    v
}

/// Runs a parsed command and returns the JSON printed on success.
pub fn execute(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = cli.opts.resolve()?;
    let ok = |command: &str, m: &RunManifest| {
        serde_json::json!({
            "status": "ok",
            "command": command,
            "run_dir": m.config.out_dir.join(&m.run_id),
            "outputs": m.outputs.len(),
        })
    };
    Ok(match &cli.command {
        Command::Gen => {
            let (m, s) = cmd_gen(&cfg)?;
            let mut v = ok("gen", &m);
            v["dataset"] = serde_json::json!(s);
            v
        }
        Command::Train => ok("train", &cmd_train(&cfg)?),
        Command::Benchmark => {
            let (m, s) = cmd_benchmark(&cfg)?;
            let mut v = ok("benchmark", &m);
            v["meta_smaller"] = serde_json::json!(s.meta_smaller);
            v
        }
        Command::Micro => {
            let (m, s) = cmd_micro(&cfg)?;
            let mut v = ok("micro", &m);
            v["meta_smaller"] = serde_json::json!(s.meta_smaller);
            v
        }
        Command::Analyze { kind } => ok("analyze", &cmd_analyze(&cfg, *kind)?),
        Command::Report => ok("report", &cmd_report(&cfg)?),
        Command::PrintConfig => serde_json::json!({ "status": "ok", "config": cfg.to_toml()? }),
    })
}

/// Parses `args`, runs the command, prints the JSON result to stdout (or
/// the error JSON to stderr) and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return 0;
            }
            let v = serde_json::json!({ "error": { "kind": "usage", "message": e.to_string() } });
            eprintln!("{v}");
            return 2;
        }
    };
    if let Command::PrintConfig = cli.command {
        return match cli.opts.resolve().and_then(|c| c.to_toml()) {
            Ok(t) => {
                let _ = write!(std::io::stdout(), "{t}");
                0
            }
            Err(e) => {
                eprintln!("{}", error_json(&e));
                exit_code(&e)
            }
        };
    }
    match execute(&cli) {
        Ok(v) => {
            let _ = writeln!(std::io::stdout(), "{v}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
