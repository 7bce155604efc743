//! JSON run configurations. Every field has a default except input paths;
//! unknown keys are rejected. Relative paths resolve against the config
//! file's directory.

use std::path::{Path, PathBuf};

use bci_gmm::policy::PolicyKind;
use bci_gmm::sim::SimConfig;
use bci_gmm::transfer::TransferConfig;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Generative model file.
    pub model: PathBuf,
    /// Models the decoder uses; defaults to `model`.
    #[serde(default)]
    pub belief_model: Option<PathBuf>,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "all_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub session: SimConfig,
}

fn default_runs() -> usize {
    2048
}

fn all_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferRunConfig {
    pub transfer: TransferConfig,
    /// Candidate count; sets the default target ratio `1/classes`.
    pub classes: usize,
    pub kl_samples: usize,
    pub seed: u64,
    /// Write a KL trace row every this many samples (the last sample always gets one).
    pub trace_every: usize,
}

impl Default for TransferRunConfig {
    fn default() -> Self {
        TransferRunConfig {
            transfer: TransferConfig::default(),
            classes: 4,
            kl_samples: bci_gmm::divergence::DEFAULT_KL_SAMPLES,
            seed: 0,
            trace_every: 1,
        }
    }
}

impl TransferRunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.transfer.validate()?;
        if self.classes < 2 {
            return Err(CliError::Config("classes must be at least 2".into()));
        }
        if self.kl_samples < 2 {
            return Err(CliError::Config("kl_samples must be at least 2".into()));
        }
        if self.trace_every == 0 {
            return Err(CliError::Config("trace_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Resolved parameters of a `fit` run.
#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub features: PathBuf,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub reg_epsilon: f64,
    pub kl_samples: usize,
}

/// Resolved parameters of a `features` run.
#[derive(Debug, Clone, Serialize)]
pub struct FeaturesRecord {
    pub epochs: PathBuf,
    pub maps: Vec<bci_gmm::features::FeatureMap>,
    pub options: bci_gmm::features::FeatureOptions,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Absolute form of `p` taken relative to `base`, so echoed configs rerun
/// from any directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::fs::canonicalize(&joined).unwrap_or(joined)
}

/// `dir/name.json` → `dir/name.config.json`.
pub fn echo_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.config.json"))
}

pub fn write_echo<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(bci_gmm::Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(path.to_path_buf(), e))
}
