use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, Instance};
use crate::error::{Error, Result};
use crate::nn::{self, parse_versioned, Activation, LayerSpec, Loss, Matrix, MlpNetwork, NetworkDoc, TrainConfig, TrainReport};

pub const CLASSIFIER_DROPOUT: f64 = 0.1;

/// How the two classes are weighted in the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    /// Every sample counts once.
    None,
    /// Each class contributes half of the total weight.
    #[default]
    Balanced,
}

impl FromStr for ClassWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ClassWeight::None),
            "balanced" => Ok(ClassWeight::Balanced),
            other => Err(Error::Config(format!("unknown class weighting `{other}` (expected none or balanced)"))),
        }
    }
}

/// Per-sample weights `n / (2 n_c)` for sample class `c`, so both classes
/// carry equal total weight and the mean weight is 1.
pub fn balanced_weights(labels: &[u8]) -> Vec<f64> {
    let n = labels.len() as f64;
    let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
    let n0 = n - n1;
    labels
        .iter()
        .map(|&y| {
            let nc = if y == 1 { n1 } else { n0 };
            n / (2.0 * nc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Hidden widths 64, 32, 16.
    Net3,
    /// Hidden widths 256, 128, 64, 32, 16.
    Net5,
}

impl Preset {
    pub fn hidden_widths(self) -> &'static [usize] {
        match self {
            Preset::Net3 => &[64, 32, 16],
            Preset::Net5 => &[256, 128, 64, 32, 16],
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "net3" => Ok(Preset::Net3),
            "net5" => Ok(Preset::Net5),
            other => Err(Error::Config(format!("unknown classifier preset `{other}` (expected net3 or net5)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Net3 => "net3",
            Preset::Net5 => "net5",
        })
    }
}

/// Untrained network for `preset`: ReLU hidden layers with dropout and a sigmoid head.
pub fn build_classifier_net(preset: Preset, input_dim: usize, seed: u64) -> Result<MlpNetwork> {
    if input_dim == 0 {
        return Err(Error::Config("classifier input dimension must be > 0".into()));
    }
    let mut specs: Vec<LayerSpec> = preset
        .hidden_widths()
        .iter()
        .map(|&w| LayerSpec::new(w, Activation::Relu, CLASSIFIER_DROPOUT))
        .collect();
    specs.push(LayerSpec::new(1, Activation::Sigmoid, 0.0));
    MlpNetwork::new(input_dim, &specs, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Binary classifier `H`; its output is read as `P(y = 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    net: MlpNetwork,
    preset: Preset,
    schema_fingerprint: String,
    /// Category count per feature (0 for continuous), used to scale label codes.
    cardinalities: Vec<usize>,
}

impl Classifier {
    pub fn new(preset: Preset, schema: &FeatureSchema, seed: u64) -> Result<Self> {
        Ok(Self {
            net: build_classifier_net(preset, schema.len(), seed)?,
            preset,
            schema_fingerprint: schema.fingerprint(),
            cardinalities: cardinalities(schema),
        })
    }

    /// Wraps an existing single-output network, e.g. a hand-built surrogate.
    pub fn from_network(net: MlpNetwork, preset: Preset, schema: &FeatureSchema) -> Result<Self> {
        if net.input_dim() != schema.len() || net.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "classifier network must be {}->1, got {}->{}",
                schema.len(),
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(Self {
            net,
            preset,
            schema_fingerprint: schema.fingerprint(),
            cardinalities: cardinalities(schema),
        })
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.net
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    /// Network input for a normalized instance: continuous values as-is,
    /// category codes scaled to `[0,1]`.
    pub fn input_vector(&self, x: &Instance) -> Vec<f64> {
        x.values()
            .iter()
            .zip(&self.cardinalities)
            .map(|(&v, &k)| if k > 1 { v / (k - 1) as f64 } else { v })
            .collect()
    }

    pub fn predict_proba(&self, x: &Instance) -> Result<f64> {
        Ok(self.net.forward(&self.input_vector(x))?[0])
    }

    pub fn predict(&self, x: &Instance) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= 0.5))
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Data("accuracy of an empty dataset".into()));
        }
        let mut hits = 0usize;
        for (x, &y) in data.rows.iter().zip(&data.labels) {
            hits += usize::from(self.predict(x)? == y);
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig, weighting: ClassWeight) -> Result<TrainReport> {
        self.check_dataset(data)?;
        let inputs: Vec<Vec<f64>> = data.rows.iter().map(|x| self.input_vector(x)).collect();
        let targets: Vec<Vec<f64>> = data.labels.iter().map(|&y| vec![f64::from(y)]).collect();
        let weights = match weighting {
            ClassWeight::Balanced if data.class_count(0) > 0 && data.class_count(1) > 0 => {
                Some(balanced_weights(&data.labels))
            }
            _ => None,
        };
        nn::train_weighted(
            &mut self.net,
            &Matrix::from_rows(&inputs)?,
            &Matrix::from_rows(&targets)?,
            weights.as_deref(),
            Loss::BinaryCrossEntropy,
            cfg,
        )
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.schema.fingerprint() != self.schema_fingerprint {
            return Err(Error::Schema("dataset schema does not match the classifier".into()));
        }
        if !data.is_normalized() {
            return Err(Error::Usage("classifier expects normalized data".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ClassifierDoc {
            version: nn::FORMAT_VERSION,
            preset: self.preset,
            schema_fingerprint: self.schema_fingerprint.clone(),
            cardinalities: self.cardinalities.clone(),
            network: NetworkDoc::from(&self.net),
        })
        .expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ClassifierDoc = parse_versioned(text)?;
        let net = MlpNetwork::try_from(doc.network)?;
        if doc.cardinalities.len() != net.input_dim() || net.output_dim() != 1 {
            return Err(Error::Parse("classifier document has inconsistent dimensions".into()));
        }
        Ok(Self {
            net,
            preset: doc.preset,
            schema_fingerprint: doc.schema_fingerprint,
            cardinalities: doc.cardinalities,
        })
    }
}

fn cardinalities(schema: &FeatureSchema) -> Vec<usize> {
    schema.features.iter().map(|f| f.categories.len()).collect()
}

#[derive(Serialize, Deserialize)]
struct ClassifierDoc {
    version: u32,
    preset: Preset,
    schema_fingerprint: String,
    cardinalities: Vec<usize>,
    network: NetworkDoc,
}
