//! Synthetic three-feature dataset with a known causal mechanism:
//!
//! ```text
//! a1 ~ N(mu1, sigma1)
//! a2 ~ N(mu2, sigma2)
//! a3 | a1, a2 ~ N(k3 (a1 + a2)^2 + b3, sigma3)
//! y  | a1, a2, a3 ~ Bernoulli(sigmoid(ky a1 a2 + by - a3))
//! ```
//!
//! All `sigma*` are standard deviations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Feature, FeatureSchema, Instance};
use crate::error::{Error, Result};
use crate::nn::sigmoid;

/// Warn when the smaller class falls under this share of the rows.
pub const MINORITY_WARNING: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleBnParams {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub k3: f64,
    pub b3: f64,
    pub sigma3: f64,
    pub ky: f64,
    pub by: f64,
}

impl Default for SimpleBnParams {
    fn default() -> Self {
        Self {
            mu1: 1.0,
            sigma1: 0.5,
            mu2: 1.0,
            sigma2: 0.5,
            k3: 0.3,
            b3: 0.0,
            sigma3: 0.1,
            ky: 1.0,
            by: 3.0,
        }
    }
}

impl SimpleBnParams {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("sigma1", self.sigma1), ("sigma2", self.sigma2), ("sigma3", self.sigma3)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {s}")));
            }
        }
        Ok(())
    }

    /// Success probability of `y` given the three features.
    pub fn label_probability(&self, a1: f64, a2: f64, a3: f64) -> f64 {
        sigmoid(self.ky * (a1 * a2) + self.by - a3)
    }

    pub fn a3_mean(&self, a1: f64, a2: f64) -> f64 {
        self.k3 * (a1 + a2).powi(2) + self.b3
    }
}

pub fn simple_bn_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        Feature::continuous("a1"),
        Feature::continuous("a2"),
        Feature::continuous("a3"),
    ])
    .expect("static schema is valid")
}

/// Draws `n` raw rows. Byte-reproducible for a fixed seed.
pub fn gen_simple_bn(params: &SimpleBnParams, n: usize, seed: u64) -> Result<Dataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let normal = |mu: f64, sd: f64| Normal::new(mu, sd).map_err(|e| Error::Config(e.to_string()));
    let d1 = normal(params.mu1, params.sigma1)?;
    let d2 = normal(params.mu2, params.sigma2)?;
    let noise3 = normal(0.0, params.sigma3)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a1 = d1.sample(&mut rng);
        let a2 = d2.sample(&mut rng);
        let a3 = params.a3_mean(a1, a2) + noise3.sample(&mut rng);
        let p = params.label_probability(a1, a2, a3);
        let y = u8::from(rng.random::<f64>() < p);
        rows.push(Instance::new(vec![a1, a2, a3]));
        labels.push(y);
    }
    let data = Dataset::new(simple_bn_schema(), rows, labels)?;
    let minority = data.minority_fraction();
    if minority < MINORITY_WARNING {
        log::warn!(
            "simple-bn: minority class is {:.1}% of {n} rows (below {:.0}%)",
            100.0 * minority,
            100.0 * MINORITY_WARNING
        );
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deterministic() -> SimpleBnParams {
        SimpleBnParams {
            mu1: 1.0,
            sigma1: 0.0,
            mu2: 2.0,
            sigma2: 0.0,
            k3: 1.0,
            b3: 0.0,
            sigma3: 0.0,
            ky: 1.0,
            by: 0.0,
        }
    }

    #[test]
    fn zero_noise_gives_exact_a3() {
        let d = gen_simple_bn(&deterministic(), 20, 1).unwrap();
        assert!(d.rows.iter().all(|r| r.values() == [1.0, 2.0, 9.0]));
    }

    #[test]
    fn label_probability_matches_sigmoid_of_minus_seven() {
        let p = deterministic().label_probability(1.0, 2.0, 9.0);
        assert!((p - 9.110_511_944_006_454e-4).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_rows() {
        let p = SimpleBnParams::default();
        assert_eq!(gen_simple_bn(&p, 50, 7).unwrap(), gen_simple_bn(&p, 50, 7).unwrap());
        assert_ne!(gen_simple_bn(&p, 50, 7).unwrap(), gen_simple_bn(&p, 50, 8).unwrap());
    }

    #[test]
    fn a1_mean_within_clt_bound() {
        let p = SimpleBnParams::default();
        let n = 10_000;
        let d = gen_simple_bn(&p, n, 3).unwrap();
        let mean = d.rows.iter().map(|r| r.get(0)).sum::<f64>() / n as f64;
        let bound = 3.0 * p.sigma1 / (n as f64).sqrt();
        assert!((mean - p.mu1).abs() < bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(gen_simple_bn(&SimpleBnParams::default(), 0, 1).is_err());
        let bad = SimpleBnParams {
            sigma3: -1.0,
            ..SimpleBnParams::default()
        };
        assert!(gen_simple_bn(&bad, 5, 1).is_err());
    }
}
