//! JSON model documents.

use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, Matrix, MlpNetwork};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDoc {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub dropout: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub version: u32,
    pub input_dim: usize,
    pub layers: Vec<LayerDoc>,
}

impl From<&MlpNetwork> for NetworkDoc {
    fn from(net: &MlpNetwork) -> Self {
        Self {
            version: FORMAT_VERSION,
            input_dim: net.input_dim(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    rows: l.weights.rows(),
                    cols: l.weights.cols(),
                    weights: l.weights.data().to_vec(),
                    bias: l.bias.clone(),
                    activation: l.activation,
                    dropout: l.dropout,
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkDoc> for MlpNetwork {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        check_version(doc.version)?;
        let layers = doc
            .layers
            .into_iter()
            .map(|l| DenseLayer::new(Matrix::from_vec(l.rows, l.cols, l.weights)?, l.bias, l.activation, l.dropout))
            .collect::<Result<Vec<_>>>()?;
        MlpNetwork::from_layers(doc.input_dim, layers)
    }
}

pub(crate) fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// Reads the `version` field before the full parse so that documents from a
/// different format revision fail with a version error rather than a field error.
pub(crate) fn parse_versioned<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse("missing numeric `version` field".into()))?;
    check_version(u32::try_from(version).unwrap_or(u32::MAX))?;
    Ok(serde_json::from_value(value)?)
}

impl MlpNetwork {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&NetworkDoc::from(self)).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_versioned::<NetworkDoc>(text)?.try_into()
    }
}
