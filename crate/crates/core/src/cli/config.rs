use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::detect::DetectorKind;
use crate::recourse::{Baseline, EngineChoice, RecourseConfig};

/// Where the engine's training rows come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineData {
    /// Fresh unfiltered draws from the SCM.
    Observational,
    /// The normal training rows.
    Train,
}

/// Everything a command needs. Read from `--config`, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `loan`, `adult` or `custom` (with `scm`).
    pub dataset: String,
    pub scm: Option<PathBuf>,
    pub detector: DetectorKind,
    pub engine: EngineChoice,
    pub baseline: Baseline,
    /// Actionable feature names; dataset default when absent.
    pub actionable: Option<Vec<String>>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub tau_level: f64,
    pub seed: u64,
    /// Number of consecutive policy seeds evaluated, starting at `seed`.
    pub seeds: usize,
    /// Policy epochs.
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub engine_epochs: Option<usize>,
    pub engine_data: EngineData,
    pub detector_epochs: Option<usize>,
    /// Normal training, normal unlabeled and anomalous row counts.
    pub counts: [usize; 3],
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: "loan".into(),
            scm: None,
            detector: DetectorKind::Svdd,
            engine: EngineChoice::Learned,
            baseline: Baseline::Adcar,
            actionable: None,
            lambda: None,
            alpha: None,
            tau_level: 0.995,
            seed: 0,
            seeds: 1,
            epochs: None,
            lr: None,
            engine_epochs: None,
            engine_data: EngineData::Observational,
            detector_epochs: None,
            counts: [10_000, 10_000, 1_000],
            out: PathBuf::from("run"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match self.dataset.as_str() {
            "loan" | "adult" => {}
            "custom" if self.scm.is_some() => {}
            "custom" => return Err(CliError::BadArgument("--dataset custom needs --scm <file>".into())),
            other => return Err(CliError::BadArgument(format!("unknown dataset {other} (loan | adult | custom)"))),
        }
        if !(self.tau_level > 0.0 && self.tau_level < 1.0) {
            return Err(CliError::BadArgument(format!("--tau-level must lie in (0, 1), got {}", self.tau_level)));
        }
        if self.seeds == 0 {
            return Err(CliError::BadArgument("--seeds must be at least 1".into()));
        }
        self.recourse(self.seed).validate().map_err(|e| CliError::BadArgument(e.to_string()))
    }

    /// Policy configuration for one seed.
    pub fn recourse(&self, seed: u64) -> RecourseConfig {
        let mut c = RecourseConfig::for_dataset(&self.dataset);
        c.seed = seed;
        c.engine = self.engine;
        c.baseline = self.baseline;
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        c
    }

    /// Writes `config.<command>.json` into the output directory.
    pub fn echo(&self, command: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let path = self.out.join(format!("config.{command}.json"));
        let text = serde_json::to_string_pretty(self).expect("serializable config") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
