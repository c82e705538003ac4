//! On-disk model bundle written by `train` and read by `fit-scm`, `explain`
//! and `evaluate`.

use std::path::{Path, PathBuf};

use proce::data::{load_csv, save_csv, Dataset, FeatureSchema, Normalizer, Split};
use proce::models::{Autoencoder, AutoencoderTriple, Classifier};
use proce::{Error, Result};

use crate::config::{read_text, with_echo, write_text};

pub const SCHEMA_FILE: &str = "schema.json";
pub const NORMALIZER_FILE: &str = "normalizer.json";
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const AUTOENCODER_FILE: &str = "autoencoder.json";
pub const AE_CLASS0_FILE: &str = "ae_class0.json";
pub const AE_CLASS1_FILE: &str = "ae_class1.json";
pub const SPLIT_FILE: &str = "split.json";
pub const DATA_FILE: &str = "data.csv";
pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Everything `train` produces. `data` holds the raw rows; `split` indexes it.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub schema: FeatureSchema,
    pub normalizer: Normalizer,
    pub classifier: Classifier,
    /// Trained on the full training split; used for the search and as the
    /// full-data autoencoder of the interpretability metrics.
    pub autoencoder: Autoencoder,
    pub ae_class0: Autoencoder,
    pub ae_class1: Autoencoder,
    pub split: Split,
    pub data: Dataset,
}

impl Bundle {
    pub fn save(&self, echo: &serde_json::Value) -> Result<()> {
        let d = &self.dir;
        write_text(&d.join(SCHEMA_FILE), &with_echo(&self.schema.to_json_pretty(), echo)?)?;
        write_text(&d.join(NORMALIZER_FILE), &with_echo(&serde_json::to_string(&self.normalizer)?, echo)?)?;
        write_text(&d.join(CLASSIFIER_FILE), &with_echo(&self.classifier.to_json(), echo)?)?;
        write_text(&d.join(AUTOENCODER_FILE), &with_echo(&self.autoencoder.to_json(), echo)?)?;
        write_text(&d.join(AE_CLASS0_FILE), &with_echo(&self.ae_class0.to_json(), echo)?)?;
        write_text(&d.join(AE_CLASS1_FILE), &with_echo(&self.ae_class1.to_json(), echo)?)?;
        write_text(&d.join(SPLIT_FILE), &with_echo(&serde_json::to_string(&self.split)?, echo)?)?;
        save_csv(&d.join(DATA_FILE), &self.data)?;
        write_text(&d.join(RUN_CONFIG_FILE), &serde_json::to_string_pretty(echo)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| read_text(&dir.join(name));
        let schema = FeatureSchema::from_json(&read(SCHEMA_FILE)?)?;
        let normalizer: Normalizer = serde_json::from_str(&read(NORMALIZER_FILE)?)?;
        if !normalizer.matches(&schema) {
            return Err(Error::Schema("bundle normalizer does not match the bundle schema".into()));
        }
        let classifier = Classifier::from_json(&read(CLASSIFIER_FILE)?)?;
        if classifier.schema_fingerprint() != schema.fingerprint() {
            return Err(Error::Schema("bundle classifier was trained on a different schema".into()));
        }
        let split: Split = serde_json::from_str(&read(SPLIT_FILE)?)?;
        let data = load_csv(&dir.join(DATA_FILE), &schema)?;
        if let Some(&bad) = split.train.iter().chain(&split.test).find(|&&i| i >= data.len()) {
            return Err(Error::Data(format!("split index {bad} exceeds the {} bundled rows", data.len())));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            schema,
            normalizer,
            classifier,
            autoencoder: Autoencoder::from_json(&read(AUTOENCODER_FILE)?)?,
            ae_class0: Autoencoder::from_json(&read(AE_CLASS0_FILE)?)?,
            ae_class1: Autoencoder::from_json(&read(AE_CLASS1_FILE)?)?,
            split,
            data,
        })
    }

    /// Normalized training split: the reference set for latent neighbours.
    pub fn train_set(&self) -> Result<Dataset> {
        self.data.subset(&self.split.train).normalized(&self.normalizer)
    }

    /// Normalized held-out split; `explain` row indices point into it.
    pub fn test_set(&self) -> Result<Dataset> {
        self.data.subset(&self.split.test).normalized(&self.normalizer)
    }

    pub fn triple(&self) -> AutoencoderTriple {
        AutoencoderTriple {
            y_org: 0,
            y_cf: 1,
            ae_org: self.ae_class0.clone(),
            ae_cf: self.ae_class1.clone(),
            ae_full: self.autoencoder.clone(),
        }
    }
}
