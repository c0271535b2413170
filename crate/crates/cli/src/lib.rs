//! Command implementations behind the `dispatch` binary.
//!
//! Each command takes a plain argument struct (shared with the clap parser),
//! writes its artifacts plus a `run_manifest.json` into an output directory,
//! and returns its in-memory results so callers can inspect them directly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use log::warn;
use serde::{Deserialize, Serialize};

use dispatch_core::head::TrainConfig;
use dispatch_core::scenario::{load_scenario, validate_scenario, Scenario};
use dispatch_core::DispatchError;

pub mod analyze;
pub mod explore;
pub mod report;
pub mod synth;
pub mod train;

pub use analyze::{cmd_analyze, AnalysisReport, AnalyzeArgs};
pub use explore::{cmd_explore, ExploreArgs, ExploreOutcome};
pub use report::{cmd_report, ReportArgs, ReportFormat};
pub use synth::{cmd_synth, cmd_validate, SynthArgs, ValidateArgs};
pub use train::{cmd_train, TrainArgs, TrainMetrics};

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Every recordable command with its full parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Subcommand)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Oracle analysis: correctness histogram, label distribution, ideal metrics.
    Analyze(AnalyzeArgs),
    /// Train one dispatcher head for a fixed penalty matrix and weighting scheme.
    Train(TrainArgs),
    /// Search penalty matrices and weighting schemes with NSGA-II.
    Explore(ExploreArgs),
    /// Convert a front file between csv, json and gnuplot data.
    Report(ReportArgs),
    /// Check a scenario bundle and print its warnings.
    Validate(ValidateArgs),
    /// Write a synthetic scenario bundle.
    Synth(SynthArgs),
}

impl Command {
    pub fn scenario(&self) -> Option<&Path> {
        match self {
            Command::Analyze(a) => Some(&a.scenario),
            Command::Train(a) => Some(&a.scenario),
            Command::Explore(a) => Some(&a.scenario),
            Command::Validate(a) => Some(&a.scenario),
            Command::Report(_) | Command::Synth(_) => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Train(a) => a.seeds.first().copied(),
            Command::Explore(a) => Some(a.seed),
            Command::Synth(a) => Some(a.seed),
            _ => None,
        }
    }

    /// Output directory, when the command writes one.
    pub fn out_dir(&self) -> Option<&Path> {
        match self {
            Command::Analyze(a) => Some(&a.out_dir),
            Command::Train(a) => Some(&a.out_dir),
            Command::Explore(a) => Some(&a.out_dir),
            Command::Synth(a) => Some(&a.out_dir),
            Command::Report(a) => a.out_dir.as_deref(),
            Command::Validate(_) => None,
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Analyze(a) => a.out_dir = dir,
            Command::Train(a) => a.out_dir = dir,
            Command::Explore(a) => a.out_dir = dir,
            Command::Synth(a) => a.out_dir = dir,
            Command::Report(a) => a.out_dir = Some(dir),
            Command::Validate(_) => {}
        }
    }
}

/// Everything needed to repeat a run; written next to the command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parameters: Command,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| {
            DispatchError::Manifest {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
            .into()
        })
    }
}

/// Training flags shared by `train` and `explore`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Leading epochs of weighted cross-entropy on every sample.
    #[arg(long, default_value_t = 1)]
    pub warmup_epochs: usize,
    /// Train on raw features instead of standardized ones.
    #[arg(long)]
    pub no_standardize: bool,
}

impl Default for TrainFlags {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            warmup_epochs: d.warmup_epochs,
            no_standardize: !d.standardize,
        }
    }
}

impl TrainFlags {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            seed,
            warmup_epochs: self.warmup_epochs,
            standardize: !self.no_standardize,
        }
    }
}

/// Exit status for a failed command: 1 for bad input, 2 for anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<DispatchError>()
            .is_some_and(DispatchError::is_validation)
    });
    if validation {
        1
    } else {
        2
    }
}

/// Runs a command and records its manifest when it has an output directory.
pub fn execute(command: &Command) -> Result<String> {
    let started = unix_now();
    let (summary, outputs) = match command {
        Command::Analyze(a) => {
            let report = cmd_analyze(a)?;
            (report.table(), vec![analyze::ANALYSIS_FILE.to_string()])
        }
        Command::Train(a) => {
            let metrics = cmd_train(a)?;
            (metrics.summary(), metrics.outputs())
        }
        Command::Explore(a) => {
            let outcome = cmd_explore(a)?;
            (
                outcome.summary(),
                explore::OUTPUT_FILES
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            )
        }
        Command::Report(a) => {
            let (text, written) = cmd_report(a)?;
            match written {
                Some(name) => (format!("wrote {name}"), vec![name]),
                None => (text, Vec::new()),
            }
        }
        Command::Validate(a) => (cmd_validate(a)?, Vec::new()),
        Command::Synth(a) => {
            let path = cmd_synth(a)?;
            (
                format!("wrote {}", path.display()),
                synth::OUTPUT_FILES.iter().map(|s| s.to_string()).collect(),
            )
        }
    };
    if let Some(dir) = command.out_dir() {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: command.scenario().map(Path::to_path_buf),
            seed: command.seed(),
            parameters: command.clone(),
            started_unix: started,
            finished_unix: unix_now(),
            outputs,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    }
    Ok(summary)
}

/// Repeats the run recorded in `manifest`, optionally into another directory.
pub fn rerun(manifest: impl AsRef<Path>, out_dir: Option<PathBuf>) -> Result<String> {
    let mut command = RunManifest::load(manifest)?.parameters;
    if let Some(dir) = out_dir {
        command.set_out_dir(dir);
    }
    execute(&command)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Loads a scenario and logs its advisory warnings.
pub(crate) fn load_checked(path: &Path) -> Result<Scenario> {
    let scenario = load_scenario(path)?;
    for w in validate_scenario(&scenario).warnings {
        warn!("{}: {w}", path.display());
    }
    Ok(scenario)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
