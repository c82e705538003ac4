//! Counterfactual quality metrics, constraint predicates and the paired
//! significance test.

mod stats;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use stats::{ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_two_sided, TTestResult};

use crate::data::{FeatureConstraint, FeatureSchema, Instance};
use crate::error::{Error, Result};
use crate::models::{squared_distance, Autoencoder, AutoencoderTriple, Classifier};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// A causal condition between original and counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    /// The feature may not decrease.
    Nondecreasing { feature: String },
    /// The summed change of `sources` and the change of `target` must not
    /// move in opposite directions.
    Proportional { sources: Vec<String>, target: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedConstraint {
    Nondecreasing(usize),
    Proportional { sources: Vec<usize>, target: usize },
}

impl ConstraintSpec {
    pub fn resolve(&self, schema: &FeatureSchema) -> Result<ResolvedConstraint> {
        Ok(match self {
            ConstraintSpec::Nondecreasing { feature } => ResolvedConstraint::Nondecreasing(schema.require_index(feature)?),
            ConstraintSpec::Proportional { sources, target } => {
                if sources.is_empty() {
                    return Err(Error::Config("proportional constraint needs at least one source".into()));
                }
                ResolvedConstraint::Proportional {
                    sources: sources
                        .iter()
                        .map(|s| schema.require_index(s))
                        .collect::<Result<Vec<_>>>()?,
                    target: schema.require_index(target)?,
                }
            }
        })
    }

    /// `(a1, a2)` proportional to `a3`.
    pub fn simple_bn() -> Vec<Self> {
        vec![ConstraintSpec::Proportional {
            sources: vec!["a1".into(), "a2".into()],
            target: "a3".into(),
        }]
    }

    /// Nondecreasing constraints declared in the schema.
    pub fn from_schema(schema: &FeatureSchema) -> Vec<Self> {
        schema
            .features
            .iter()
            .filter(|f| f.constraint == Some(FeatureConstraint::Nondecreasing))
            .map(|f| ConstraintSpec::Nondecreasing {
                feature: f.name.clone(),
            })
            .collect()
    }

    pub fn load_list(path: &Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn resolve_all(specs: &[ConstraintSpec], schema: &FeatureSchema) -> Result<Vec<ResolvedConstraint>> {
    specs.iter().map(|c| c.resolve(schema)).collect()
}

/// Violated only when the summed source change exceeds `tol` in magnitude
/// and the target either moves the other way or stays within `tol`.
pub fn check_proportional(x_org: &Instance, x_cf: &Instance, sources: &[usize], target: usize, tol: f64) -> bool {
    let s: f64 = sources.iter().map(|&j| x_cf.get(j) - x_org.get(j)).sum();
    let t = x_cf.get(target) - x_org.get(target);
    if s.abs() <= tol {
        return true;
    }
    t.abs() > tol && t.signum() == s.signum()
}

pub fn check_nondecreasing(x_org: &Instance, x_cf: &Instance, feature: usize) -> bool {
    x_cf.get(feature) >= x_org.get(feature)
}

pub fn satisfies_all(x_org: &Instance, x_cf: &Instance, constraints: &[ResolvedConstraint], tol: f64) -> bool {
    constraints.iter().all(|c| match c {
        ResolvedConstraint::Nondecreasing(j) => check_nondecreasing(x_org, x_cf, *j),
        ResolvedConstraint::Proportional { sources, target } => check_proportional(x_org, x_cf, sources, *target, tol),
    })
}

fn nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Usage(format!("{what} of an empty batch")));
    }
    Ok(())
}

/// Share of counterfactuals classified as their desired class.
pub fn target_class_validity(x_cfs: &[Instance], y_cfs: &[u8], classifier: &Classifier) -> Result<f64> {
    nonempty(x_cfs, "target-class validity")?;
    if x_cfs.len() != y_cfs.len() {
        return Err(Error::Shape("one desired class per counterfactual is required".into()));
    }
    let mut hits = 0usize;
    for (x, &y) in x_cfs.iter().zip(y_cfs) {
        hits += usize::from(classifier.predict(x)? == y);
    }
    Ok(hits as f64 / x_cfs.len() as f64)
}

/// Share of `(x_org, x_cf)` pairs meeting every constraint.
pub fn causal_constraint_validity(pairs: &[(Instance, Instance)], constraints: &[ResolvedConstraint], tol: f64) -> Result<f64> {
    nonempty(pairs, "causal-constraint validity")?;
    let ok = pairs.iter().filter(|(o, c)| satisfies_all(o, c, constraints, tol)).count();
    Ok(ok as f64 / pairs.len() as f64)
}

pub fn categorical_matches(schema: &FeatureSchema, x_org: &Instance, x_cf: &Instance) -> usize {
    schema
        .categorical_indices()
        .filter(|&j| x_org.category(j) == x_cf.category(j))
        .count()
}

pub fn continuous_sq_distance(schema: &FeatureSchema, x_org: &Instance, x_cf: &Instance) -> f64 {
    schema
        .continuous_indices()
        .map(|j| (x_cf.get(j) - x_org.get(j)).powi(2))
        .sum()
}

/// Mean number of unchanged categorical features per pair.
pub fn categorical_proximity(schema: &FeatureSchema, pairs: &[(Instance, Instance)]) -> Result<f64> {
    nonempty(pairs, "categorical proximity")?;
    Ok(pairs.iter().map(|(o, c)| categorical_matches(schema, o, c) as f64).sum::<f64>() / pairs.len() as f64)
}

/// Negative mean squared L2 change over continuous features.
pub fn continuous_proximity(schema: &FeatureSchema, pairs: &[(Instance, Instance)]) -> Result<f64> {
    nonempty(pairs, "continuous proximity")?;
    Ok(-pairs.iter().map(|(o, c)| continuous_sq_distance(schema, o, c)).sum::<f64>() / pairs.len() as f64)
}

fn require_trained(aes: &[&Autoencoder]) -> Result<()> {
    if aes.iter().any(|a| !a.is_trained()) {
        return Err(Error::Usage("interpretability metrics need trained autoencoders".into()));
    }
    Ok(())
}

/// `numerator / (denominator + eps)`.
pub fn ratio(numerator: f64, denominator: f64, eps: f64) -> f64 {
    numerator / (denominator + eps)
}

/// Reconstruction error of `x_cf` under the counterfactual-class
/// autoencoder relative to the original-class one. Errors are measured in
/// the canonical representation (continuous values plus category one-hots).
pub fn im1(ae_cf: &Autoencoder, ae_org: &Autoencoder, x_cf: &Instance, eps: f64) -> Result<f64> {
    require_trained(&[ae_cf, ae_org])?;
    let x = ae_cf.canonical(x_cf)?;
    let num = squared_distance(&x, &ae_cf.reconstruct_canonical(x_cf)?);
    let den = squared_distance(&x, &ae_org.reconstruct_canonical(x_cf)?);
    Ok(ratio(num, den, eps))
}

/// Disagreement between the counterfactual-class and full-data
/// reconstructions relative to the size of `x_cf`.
pub fn im2(ae_cf: &Autoencoder, ae_full: &Autoencoder, x_cf: &Instance, eps: f64) -> Result<f64> {
    require_trained(&[ae_cf, ae_full])?;
    let x = ae_cf.canonical(x_cf)?;
    let num = squared_distance(&ae_cf.reconstruct_canonical(x_cf)?, &ae_full.reconstruct_canonical(x_cf)?);
    let den: f64 = x.iter().map(|v| v * v).sum();
    Ok(ratio(num, den, eps))
}

/// One explained instance as seen by the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub x_org: Instance,
    pub x_cf: Instance,
    pub y_org: u8,
    pub y_cf: u8,
}

/// Per-sample metric values, used for paired comparisons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerSample {
    pub valid: Vec<f64>,
    pub constraints_ok: Vec<f64>,
    pub cat_matches: Vec<f64>,
    pub con_distance: Vec<f64>,
    pub im1: Vec<f64>,
    pub im2: Vec<f64>,
}

impl PerSample {
    pub fn metric(&self, name: &str) -> Result<&[f64]> {
        Ok(match name {
            "tcv" => &self.valid,
            "ccv" => &self.constraints_ok,
            "cat_prox" => &self.cat_matches,
            "con_prox" => &self.con_distance,
            "im1" => &self.im1,
            "im2" => &self.im2,
            other => return Err(Error::Usage(format!("unknown metric `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub dataset: String,
    pub n: usize,
    pub tcv: f64,
    pub ccv: f64,
    pub cat_prox: f64,
    pub con_prox: f64,
    pub im1: f64,
    pub im2: f64,
    pub im2_x10: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct MetricsContext<'a> {
    pub schema: &'a FeatureSchema,
    pub classifier: &'a Classifier,
    pub autoencoders: &'a AutoencoderTriple,
    pub constraints: &'a [ResolvedConstraint],
    pub tol: f64,
    pub epsilon: f64,
}

/// Every metric over a batch, plus the per-sample values behind them.
pub fn evaluate_batch(ctx: &MetricsContext<'_>, items: &[EvalItem], method: &str, dataset: &str) -> Result<(MetricsReport, PerSample)> {
    nonempty(items, "metrics")?;
    let mut per = PerSample::default();
    for it in items {
        let (ae_org, ae_cf, ae_full) = ctx.autoencoders.for_direction(it.y_org, it.y_cf)?;
        per.valid.push(f64::from(u8::from(ctx.classifier.predict(&it.x_cf)? == it.y_cf)));
        per.constraints_ok
            .push(f64::from(u8::from(satisfies_all(&it.x_org, &it.x_cf, ctx.constraints, ctx.tol))));
        per.cat_matches.push(categorical_matches(ctx.schema, &it.x_org, &it.x_cf) as f64);
        per.con_distance.push(-continuous_sq_distance(ctx.schema, &it.x_org, &it.x_cf));
        per.im1.push(im1(ae_cf, ae_org, &it.x_cf, ctx.epsilon)?);
        per.im2.push(im2(ae_cf, ae_full, &it.x_cf, ctx.epsilon)?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let im2_mean = mean(&per.im2);
    let report = MetricsReport {
        method: method.to_string(),
        dataset: dataset.to_string(),
        n: items.len(),
        tcv: mean(&per.valid),
        ccv: mean(&per.constraints_ok),
        cat_prox: mean(&per.cat_matches),
        con_prox: mean(&per.con_distance),
        im1: mean(&per.im1),
        im2: im2_mean,
        im2_x10: 10.0 * im2_mean,
        epsilon: ctx.epsilon,
        runtime_seconds: None,
    };
    Ok((report, per))
}

/// One CSV row per report.
pub fn write_metrics_csv<W: Write>(writer: W, reports: &[MetricsReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in reports {
        wtr.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::Parse(e.to_string()))
}
