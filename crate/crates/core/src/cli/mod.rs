//! The `recourse` command line: argument parsing, artifact layout and exit codes.

mod commands;
mod config;

pub use commands::{run, Context};
pub use config::{EngineData, RunConfig};

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::CheckpointError;
use crate::data::DataError;
use crate::detect::{DetectError, DetectorKind};
use crate::engine::EngineError;
use crate::eval::SweepParam;
use crate::recourse::{Baseline, EngineChoice, RecourseError};
use crate::scm::ScmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
    #[error("missing {0}")]
    Missing(String),
    #[error("{0}")]
    BadArgument(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Missing(_) => 4,
            CliError::BadArgument(_) => 5,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            DataError::Missing(f) => CliError::Missing(f),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ScmError> for CliError {
    fn from(e: ScmError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Checkpoint(c) => c.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Checkpoint(c) => c.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RecourseError> for CliError {
    fn from(e: RecourseError) -> Self {
        match e {
            RecourseError::Checkpoint(c) => c.into(),
            RecourseError::Engine(c) => c.into(),
            RecourseError::Detect(c) => c.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn parse_kind(s: &str) -> Result<DetectorKind, String> {
    DetectorKind::parse(s).ok_or_else(|| format!("unknown detector {s} (ae | svdd)"))
}

fn parse_engine(s: &str) -> Result<EngineChoice, String> {
    match s {
        "learned" => Ok(EngineChoice::Learned),
        "exact" => Ok(EngineChoice::Exact),
        _ => Err(format!("unknown engine {s} (learned | exact)")),
    }
}

fn parse_baseline(s: &str) -> Result<Baseline, String> {
    match s {
        "adcar" => Ok(Baseline::Adcar),
        "naive" => Ok(Baseline::Naive),
        _ => Err(format!("unknown baseline {s} (adcar | naive)")),
    }
}

/// Flags shared by every command; each overrides the matching `--config` field.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// loan | adult | custom
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    /// SCM description for --dataset custom.
    #[arg(long, global = true)]
    pub scm: Option<PathBuf>,
    /// ae | svdd
    #[arg(long, global = true, value_parser = parse_kind)]
    pub detector: Option<DetectorKind>,
    /// learned | exact
    #[arg(long, global = true, value_parser = parse_engine)]
    pub engine: Option<EngineChoice>,
    /// adcar | naive
    #[arg(long, global = true, value_parser = parse_baseline)]
    pub baseline: Option<Baseline>,
    /// Comma-separated actionable feature names.
    #[arg(long, global = true, value_delimiter = ',')]
    pub actionable: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Quantile of the training scores used as threshold.
    #[arg(long, global = true)]
    pub tau_level: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of policy seeds for evaluate.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    /// Policy training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Policy learning rate.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub engine_epochs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub engine_data: Option<EngineData>,
    #[arg(long, global = true)]
    pub detector_epochs: Option<usize>,
    /// normal-train,normal-unlabeled,anomalous
    #[arg(long, global = true, value_delimiter = ',', num_args = 1)]
    pub counts: Option<Vec<usize>>,
    /// Artifact directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Draw the training and unlabeled splits.
    Generate,
    /// Train a detector and calibrate its threshold.
    TrainDetector,
    /// Train the graph autoencoder counterfactual engine.
    TrainEngine,
    /// Train an action policy on the detected anomalies.
    TrainRecourse,
    /// Flip ratios, action norms and detection metrics.
    Evaluate,
    /// Retrain the policy over a grid of lambda or alpha values.
    Sweep {
        #[arg(long, default_value = "lambda")]
        param: SweepParam,
        /// Comma-separated grid; the default grid when absent.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Case-study table for one detected anomaly.
    Explain {
        /// Position among the detected rows.
        #[arg(long)]
        index: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::TrainDetector => "train-detector",
            Command::TrainEngine => "train-engine",
            Command::TrainRecourse => "train-recourse",
            Command::Evaluate => "evaluate",
            Command::Sweep { .. } => "sweep",
            Command::Explain { .. } => "explain",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "recourse", version, about = "Causal algorithmic recourse for anomaly detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

impl Flags {
    /// Config file (if any) with flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) if !p.exists() => return Err(CliError::Missing(format!("config file {}", p.display()))),
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = Some(v.clone()); } )* };
        }
        set!(dataset, detector, engine, baseline, tau_level, seed, seeds, engine_data, out);
        set_opt!(scm, actionable, lambda, alpha, epochs, lr, engine_epochs, detector_epochs);
        if let Some(v) = &self.counts {
            c.counts = v
                .as_slice()
                .try_into()
                .map_err(|_| CliError::BadArgument(format!("--counts needs three values, got {}", v.len())))?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    main_from(std::env::args_os())
}

pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 5 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.flags.resolve().and_then(|c| run(&cli.command, &c)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
