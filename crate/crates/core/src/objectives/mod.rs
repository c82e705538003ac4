//! The three search objectives (prediction loss, prototype loss, combined
//! distance), latent nearest neighbours and prototype construction.

use serde::{Deserialize, Serialize};

use crate::causal::StructuralModel;
use crate::data::{Dataset, FeatureSchema, Instance};
use crate::error::{Error, Result};
use crate::models::{squared_distance, Autoencoder, Classifier};
use crate::nn::cross_entropy;

pub const DEFAULT_K: usize = 25;

/// Distance contribution of feature `j`: squared difference for continuous
/// features, squared embedding distance for categorical ones.
pub fn feature_distance(ae: &Autoencoder, schema: &FeatureSchema, j: usize, a: &Instance, b: &Instance) -> Result<f64> {
    if j >= schema.len() || a.len() != schema.len() || b.len() != schema.len() {
        return Err(Error::Shape(format!("feature {j} / instance lengths do not match the schema")));
    }
    if schema.feature(j).is_categorical() {
        ae.cat_embed_distance(j, a.category(j), b.category(j))
    } else {
        let d = a.get(j) - b.get(j);
        Ok(d * d)
    }
}

/// Mixed-type distance summed over every feature.
pub fn f_dist(ae: &Autoencoder, schema: &FeatureSchema, x_cf: &Instance, x_org: &Instance) -> Result<f64> {
    (0..schema.len()).map(|j| feature_distance(ae, schema, j, x_cf, x_org)).sum()
}

/// Cross-entropy of the classifier output against the desired class.
pub fn f_pred(classifier: &Classifier, x_cf: &Instance, y_cf: u8) -> Result<f64> {
    cross_entropy(classifier.predict_proba(x_cf)?, y_cf)
}

/// Squared latent distance to the prototype.
pub fn f_proto(ae: &Autoencoder, x_cf: &Instance, proto: &[f64]) -> Result<f64> {
    let z = ae.encode(x_cf)?;
    if z.len() != proto.len() {
        return Err(Error::Shape(format!("prototype has {} values, latent has {}", proto.len(), z.len())));
    }
    Ok(squared_distance(&z, proto))
}

/// `K` rows whose label differs from `y_org`, nearest to `z_org` in latent
/// space; ties go to the lower row index.
pub fn knn_from_latents(latents: &[Vec<f64>], labels: &[u8], z_org: &[f64], y_org: u8, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let mut scored: Vec<(f64, usize)> = latents
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (_, &y))| y != y_org)
        .map(|(i, (z, _))| (squared_distance(z, z_org), i))
        .collect();
    if scored.len() < k {
        return Err(Error::Data(format!(
            "K = {k} neighbours requested but only {} rows have a class other than {y_org}",
            scored.len()
        )));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

pub fn encode_all(data: &Dataset, ae: &Autoencoder) -> Result<Vec<Vec<f64>>> {
    data.rows.iter().map(|x| ae.encode(x)).collect()
}

pub fn knn_counterfactual_class(data: &Dataset, ae: &Autoencoder, x_org: &Instance, y_org: u8, k: usize) -> Result<Vec<usize>> {
    knn_from_latents(&encode_all(data, ae)?, &data.labels, &ae.encode(x_org)?, y_org, k)
}

/// Component-wise mean of the given latent vectors.
pub fn mean_latent(latents: &[&[f64]]) -> Result<Vec<f64>> {
    let first = latents
        .first()
        .ok_or_else(|| Error::Usage("prototype of an empty neighbour set".into()))?;
    let mut sum = vec![0.0; first.len()];
    for z in latents {
        if z.len() != sum.len() {
            return Err(Error::Shape("latent vectors differ in length".into()));
        }
        sum.iter_mut().zip(z.iter()).for_each(|(s, v)| *s += v);
    }
    let n = latents.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Mean latent of the given rows. Rows are summed in ascending index order,
/// so any permutation of `neighbor_indices` gives a bit-identical result.
pub fn compute_prototype(data: &Dataset, ae: &Autoencoder, neighbor_indices: &[usize]) -> Result<Vec<f64>> {
    let mut sorted = neighbor_indices.to_vec();
    sorted.sort_unstable();
    let latents = sorted
        .iter()
        .map(|&i| {
            data.rows
                .get(i)
                .ok_or_else(|| Error::Usage(format!("neighbour index {i} out of range")))
                .and_then(|x| ae.encode(x))
        })
        .collect::<Result<Vec<_>>>()?;
    mean_latent(&latents.iter().map(Vec::as_slice).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeContext {
    pub proto: Vec<f64>,
    pub k: usize,
    pub neighbor_indices: Vec<usize>,
    pub y_org: u8,
    pub y_cf: u8,
}

impl PrototypeContext {
    pub fn build(data: &Dataset, ae: &Autoencoder, x_org: &Instance, y_org: u8, y_cf: u8, k: usize) -> Result<Self> {
        if y_org == y_cf {
            return Err(Error::Usage(format!("target class {y_cf} equals the original class")));
        }
        let neighbor_indices = knn_counterfactual_class(data, ae, x_org, y_org, k)?;
        let proto = compute_prototype(data, ae, &neighbor_indices)?;
        Ok(Self {
            proto,
            k,
            neighbor_indices,
            y_org,
            y_cf,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    #[serde(rename = "pred")]
    pub f_pred: f64,
    #[serde(rename = "proto")]
    pub f_proto: f64,
    #[serde(rename = "dist")]
    pub f_dist_final: f64,
}

impl ObjectiveVector {
    pub fn new(f_pred: f64, f_proto: f64, f_dist_final: f64) -> Self {
        Self {
            f_pred,
            f_proto,
            f_dist_final,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.f_pred, self.f_proto, self.f_dist_final]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Everything needed to score a candidate for one explanation request.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub classifier: &'a Classifier,
    pub ae: &'a Autoencoder,
    pub model: &'a StructuralModel,
    pub schema: &'a FeatureSchema,
    pub proto: &'a [f64],
    pub x_org: &'a Instance,
    pub y_cf: u8,
}

impl EvalContext<'_> {
    pub fn evaluate(&self, candidate: &Instance) -> Result<ObjectiveVector> {
        let v = ObjectiveVector {
            f_pred: f_pred(self.classifier, candidate, self.y_cf)?,
            f_proto: f_proto(self.ae, candidate, self.proto)?,
            f_dist_final: self.model.final_distance(self.ae, self.schema, candidate, self.x_org)?,
        };
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite objectives {:?}", v.as_array())));
        }
        Ok(v)
    }
}

pub fn evaluate_objectives(ctx: &EvalContext<'_>, candidate: &Instance) -> Result<ObjectiveVector> {
    ctx.evaluate(candidate)
}
