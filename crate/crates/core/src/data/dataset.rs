use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureSchema, Normalizer};
use crate::error::{Error, Result};

/// One row of features. Continuous features hold reals (in `[0,1]` once
/// normalized); categorical features hold their category index as an
/// integer-valued `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance(pub Vec<f64>);

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    #[inline]
    pub fn category(&self, j: usize) -> usize {
        self.0[j] as usize
    }

    /// Checks layout, category validity and (if `normalized`) the unit range.
    pub fn validate(&self, schema: &FeatureSchema, normalized: bool) -> Result<()> {
        if self.len() != schema.len() {
            return Err(Error::Shape(format!(
                "instance has {} values, schema has {} features",
                self.len(),
                schema.len()
            )));
        }
        for (j, f) in schema.features.iter().enumerate() {
            let v = self.0[j];
            if !v.is_finite() {
                return Err(Error::Domain(format!("feature `{}` is not finite", f.name)));
            }
            if f.is_categorical() {
                if v < 0.0 || v.fract() != 0.0 || v as usize >= f.categories.len() {
                    return Err(Error::Domain(format!(
                        "feature `{}` has invalid category index {v}",
                        f.name
                    )));
                }
            } else if normalized && !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "normalized feature `{}` = {v} outside [0,1]",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Instance>,
    pub labels: Vec<u8>,
    /// Present once the continuous features have been scaled to `[0,1]`.
    pub normalizer: Option<Normalizer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Instance>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Data(format!("label {l} is not binary")));
        }
        for (i, r) in rows.iter().enumerate() {
            r.validate(&schema, false)
                .map_err(|e| Error::Data(format!("row {i}: {e}")))?;
        }
        Ok(Self {
            schema,
            rows,
            labels,
            normalizer: None,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalizer.is_some()
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// Fraction of rows in the smaller class.
    pub fn minority_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let ones = self.class_count(1);
        ones.min(self.len() - ones) as f64 / self.len() as f64
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            normalizer: self.normalizer.clone(),
        }
    }

    pub fn class_subset(&self, class: u8) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == class).collect();
        self.subset(&idx)
    }

    /// Applies `normalizer` to every row.
    pub fn normalized(&self, normalizer: &Normalizer) -> Result<Self> {
        if self.is_normalized() {
            return Err(Error::Usage("dataset is already normalized".into()));
        }
        let rows = self
            .rows
            .iter()
            .map(|r| normalizer.normalize(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema: self.schema.clone(),
            rows,
            labels: self.labels.clone(),
            normalizer: Some(normalizer.clone()),
        })
    }

    /// Seeded shuffle split: `floor(ratio * n)` training rows, the rest test.
    pub fn split_indices(&self, ratio: f64, seed: u64) -> Result<Split> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("split ratio {ratio} not in (0,1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (ratio * self.len() as f64).floor() as usize;
        let test = order.split_off(cut);
        Ok(Split { train: order, test })
    }

    pub fn split(&self, ratio: f64, seed: u64) -> Result<(Self, Self)> {
        let s = self.split_indices(ratio, seed)?;
        Ok((self.subset(&s.train), self.subset(&s.test)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Feature;

    fn toy(n: usize) -> Dataset {
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let rows = (0..n).map(|i| Instance::new(vec![i as f64])).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::new(schema, rows, labels).unwrap()
    }

    #[test]
    fn split_sizes_and_coverage() {
        let d = toy(10);
        let s = d.split_indices(0.8, 42).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s, d.split_indices(0.8, 42).unwrap());
    }

    #[test]
    fn split_rejects_bad_ratio() {
        assert!(toy(4).split_indices(1.0, 0).is_err());
        assert!(toy(4).split_indices(0.0, 0).is_err());
    }

    #[test]
    fn label_count_mismatch_rejected() {
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        assert!(Dataset::new(schema, vec![Instance::new(vec![1.0])], vec![]).is_err());
    }
}
