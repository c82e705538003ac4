use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureConstraint {
    None,
    /// The counterfactual value may not be below the original (e.g. age).
    Nondecreasing,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default = "default_true")]
    pub mutable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<FeatureConstraint>,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
            mutable: true,
            constraint: None,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            mutable: true,
            constraint: None,
        }
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }

    pub fn nondecreasing(mut self) -> Self {
        self.constraint = Some(FeatureConstraint::Nondecreasing);
        self
    }

    #[inline]
    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }
}

pub const DEFAULT_LABEL: &str = "label";

fn default_label() -> String {
    DEFAULT_LABEL.to_owned()
}

/// Per-feature metadata governing encoding, mutation and decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
    #[serde(default = "default_label")]
    pub label: String,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let schema = Self {
            features,
            label: default_label(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Result<Self> {
        self.label = label.into();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if f.name == self.label {
                return Err(Error::Schema(format!("feature `{}` collides with the label column", f.name)));
            }
            match f.kind {
                FeatureKind::Categorical => {
                    if f.categories.len() < 2 {
                        return Err(Error::Schema(format!(
                            "categorical feature `{}` needs at least 2 categories",
                            f.name
                        )));
                    }
                    let distinct: HashSet<_> = f.categories.iter().collect();
                    if distinct.len() != f.categories.len() {
                        return Err(Error::Schema(format!("feature `{}` repeats a category", f.name)));
                    }
                }
                FeatureKind::Continuous => {
                    if !f.categories.is_empty() {
                        return Err(Error::Schema(format!(
                            "continuous feature `{}` must not list categories",
                            f.name
                        )));
                    }
                }
            }
            if matches!(f.constraint, Some(FeatureConstraint::Nondecreasing)) && !f.mutable {
                return Err(Error::Schema(format!(
                    "constraint on immutable feature `{}` has no effect",
                    f.name
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.features.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, j: usize) -> &Feature {
        &self.features[j]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn require_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{name}`")))
    }

    pub fn categorical_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&j| self.features[j].is_categorical())
    }

    pub fn continuous_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&j| !self.features[j].is_categorical())
    }

    /// Short stable digest identifying this schema.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}
