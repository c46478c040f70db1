use std::path::{Path, PathBuf};

use copf_core::dataset::GenerateConfig;
use copf_core::moge::TrainConfig;
use copf_core::{ModelKind, SolveOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Settings shared by every subcommand. Values come from the defaults, then
/// the `--config` file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub model: ModelKind,
    pub solver: SolveOptions,
    pub sampling: Sampling,
    pub training: Training,
    pub screening: Screening,
    pub output: Output,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: None,
            model: ModelKind::Qc,
            solver: SolveOptions::default(),
            sampling: Sampling::default(),
            training: Training::default(),
            screening: Screening::default(),
            output: Output::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub k1: usize,
    pub k2: usize,
    /// Total dataset size; phase 2 fills up to it. Takes precedence over `k2`.
    pub total: Option<usize>,
    pub eps: f64,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        let g = GenerateConfig::default();
        Sampling {
            k1: g.k1,
            k2: g.k2,
            total: g.total,
            eps: 0.05,
            seed: g.seed,
            train_fraction: g.train_fraction,
        }
    }
}

impl Sampling {
    pub fn generate_config(&self) -> GenerateConfig {
        GenerateConfig {
            k1: self.k1,
            k2: self.k2,
            total: self.total,
            seed: self.seed,
            train_fraction: self.train_fraction,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Training {
    pub seed: u64,
    #[serde(flatten)]
    pub params: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Screening {
    /// Replaces the binding threshold stored in a model, relative to its
    /// largest training dual.
    pub bind_rel: Option<f64>,
    pub timing: bool,
    pub serial: bool,
    /// Seeds the per-instance order of full and screened solves.
    pub seed: u64,
    /// Use at most this many test instances.
    pub instances: Option<usize>,
}

impl Default for Screening {
    fn default() -> Self {
        Screening {
            bind_rel: None,
            timing: true,
            serial: true,
            seed: 0,
            instances: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub report: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dataset: "dataset.bin".into(),
            model: "model.json".into(),
            report: "report.csv".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))
    }
}
