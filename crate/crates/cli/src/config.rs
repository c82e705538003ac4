//! Effective run configuration: built-in defaults, overlaid by an optional
//! JSON config file, overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use proce::data::SimpleBnParams;
use proce::eval::{DEFAULT_EPSILON, DEFAULT_TOLERANCE};
use proce::models::{ClassWeight, Preset, DEFAULT_CATEGORY_WIDTH, DEFAULT_EMBEDDING_DIM, DEFAULT_HIDDEN};
use proce::moo::GaConfig;
use proce::nn::TrainConfig;
use proce::objectives::DEFAULT_K;
use proce::{Error, Result};
use serde::{Deserialize, Serialize};

/// Environment variable consulted when no seed is given by flag or file.
pub const SEED_ENV: &str = "PROCE_SEED";

/// Every tunable of the pipeline. Serialized into each output artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; resolved to a concrete value before any command runs.
    pub seed: Option<u64>,
    /// Label column override; the schema's own label when absent.
    pub label: Option<String>,
    /// Rows produced by `gen-simple-bn`.
    pub n: usize,
    pub simple_bn: SimpleBnParams,
    /// Share of rows in the training split.
    pub split_ratio: f64,
    pub preset: Preset,
    pub class_weight: ClassWeight,
    pub classifier_epochs: usize,
    pub autoencoder_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub category_width: usize,
    pub autoencoder_hidden: usize,
    pub categorical_exogenous: bool,
    pub ga: GaConfig,
    pub k: usize,
    /// Desired class; the opposite of the predicted class when absent.
    pub target_class: Option<u8>,
    pub jobs: usize,
    pub record_runtime: bool,
    pub tolerance: f64,
    pub epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            label: None,
            n: 2000,
            simple_bn: SimpleBnParams::default(),
            split_ratio: 0.8,
            preset: Preset::Net3,
            class_weight: ClassWeight::Balanced,
            classifier_epochs: 50,
            autoencoder_epochs: 20,
            learning_rate: 1e-3,
            batch_size: 32,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            category_width: DEFAULT_CATEGORY_WIDTH,
            autoencoder_hidden: DEFAULT_HIDDEN,
            categorical_exogenous: false,
            ga: GaConfig::default(),
            k: DEFAULT_K,
            target_class: None,
            jobs: 1,
            record_runtime: false,
            tolerance: DEFAULT_TOLERANCE,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl RunConfig {
    /// Defaults overlaid by the file at `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = read_text(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Seed precedence: flag, then config file, then `PROCE_SEED`, then 0.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };
        let seed = flag.or(self.seed).or(env).unwrap_or(0);
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio must lie in (0,1), got {}", self.split_ratio)));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if let Some(t) = self.target_class {
            if t > 1 {
                return Err(Error::Config(format!("target class must be 0 or 1, got {t}")));
            }
        }
        if !(self.tolerance >= 0.0 && self.epsilon > 0.0) {
            return Err(Error::Config("tolerance must be >= 0 and epsilon > 0".into()));
        }
        self.ga.validate()
    }

    pub fn classifier_training(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.classifier_epochs,
            batch_size: self.batch_size,
            seed: self.seed(),
            ..TrainConfig::default()
        }
    }

    pub fn autoencoder_training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.autoencoder_epochs,
            ..self.classifier_training()
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Provenance block written into every artifact.
pub fn echo(command: &str, paths: &BTreeMap<&str, String>, cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "tool_version": proce::engine::TOOL_VERSION,
        "command": command,
        "paths": paths,
        "config": cfg,
    })
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from(path),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Adds `run_config` to a JSON object document produced by the core library.
pub fn with_echo(json: &str, echo: &serde_json::Value) -> Result<String> {
    let mut doc: serde_json::Value = serde_json::from_str(json)?;
    match doc.as_object_mut() {
        Some(obj) => {
            obj.insert("run_config".into(), echo.clone());
        }
        None => return Err(Error::Parse("expected a JSON object document".into())),
    }
    Ok(serde_json::to_string_pretty(&doc)?)
}
