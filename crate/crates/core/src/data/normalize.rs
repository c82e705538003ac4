use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema, Instance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
    /// Set when the column was constant; such features normalize to 0.
    #[serde(default)]
    pub degenerate: bool,
}

/// Min-max scaling of continuous features to `[0,1]`. Categorical entries are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub ranges: Vec<Option<FeatureRange>>,
}

impl Normalizer {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_normalized() {
            return Err(Error::Usage("cannot fit a normalizer on normalized data".into()));
        }
        if dataset.is_empty() {
            return Err(Error::Data("cannot fit a normalizer on an empty dataset".into()));
        }
        let ranges = dataset
            .schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| {
                if f.is_categorical() {
                    return None;
                }
                let (min, max) = dataset
                    .rows
                    .iter()
                    .map(|r| r.get(j))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let degenerate = max <= min;
                if degenerate {
                    log::warn!("feature `{}` is constant ({min}); it normalizes to 0", f.name);
                }
                Some(FeatureRange { min, max, degenerate })
            })
            .collect();
        Ok(Self { ranges })
    }

    pub fn normalize(&self, x: &Instance) -> Result<Instance> {
        self.check(x)?;
        Ok(Instance::new(
            x.values()
                .iter()
                .zip(&self.ranges)
                .map(|(&v, r)| match r {
                    None => v,
                    Some(r) if r.degenerate => 0.0,
                    Some(r) => (v - r.min) / (r.max - r.min),
                })
                .collect(),
        ))
    }

    pub fn denormalize(&self, x: &Instance) -> Result<Instance> {
        self.check(x)?;
        Ok(Instance::new(
            x.values()
                .iter()
                .zip(&self.ranges)
                .map(|(&v, r)| match r {
                    None => v,
                    Some(r) if r.degenerate => r.min,
                    Some(r) => r.min + v * (r.max - r.min),
                })
                .collect(),
        ))
    }

    /// Converts a normalized-space difference on feature `j` to raw units.
    pub fn scale_delta(&self, j: usize, delta: f64) -> f64 {
        match self.ranges.get(j).copied().flatten() {
            Some(r) if !r.degenerate => delta * (r.max - r.min),
            Some(_) => 0.0,
            None => delta,
        }
    }

    pub fn matches(&self, schema: &FeatureSchema) -> bool {
        self.ranges.len() == schema.len()
            && self
                .ranges
                .iter()
                .zip(&schema.features)
                .all(|(r, f)| r.is_none() == f.is_categorical())
    }

    fn check(&self, x: &Instance) -> Result<()> {
        if x.len() != self.ranges.len() {
            return Err(Error::Shape(format!(
                "instance has {} values, normalizer covers {}",
                x.len(),
                self.ranges.len()
            )));
        }
        Ok(())
    }
}
