use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::graph::{validate_dag, CausalGraph};
use crate::data::{Dataset, FeatureSchema, Instance};
use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::nn::{parse_versioned, FORMAT_VERSION};
use crate::objectives::feature_distance;

/// Diagonal shift used when the least-squares design matrix is singular.
pub const RIDGE_LAMBDA: f64 = 1e-8;
/// `|R_ii|` below this fraction of the largest diagonal entry counts as rank loss.
const RANK_TOLERANCE: f64 = 1e-10;

/// `child = intercept + sum_i coefficients[i] * parents[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralEquation {
    pub child: String,
    pub parents: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Coefficient of determination on the fitting data.
    #[serde(default)]
    pub r_squared: f64,
    /// Whether the ridge fallback was used.
    #[serde(default)]
    pub ridge: bool,
}

impl StructuralEquation {
    pub fn evaluate(&self, parent_values: &[f64]) -> Result<f64> {
        if parent_values.len() != self.parents.len() {
            return Err(Error::Shape(format!(
                "equation for `{}` needs {} parent values, got {}",
                self.child,
                self.parents.len(),
                parent_values.len()
            )));
        }
        Ok(self.intercept + self.coefficients.iter().zip(parent_values).map(|(c, v)| c * v).sum::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Treat categorical children as exogenous instead of regressing their
    /// label codes on their parents.
    pub categorical_exogenous: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Binding {
    /// Per schema feature: index into `equations` when endogenous.
    equation_of: Vec<Option<usize>>,
    /// Schema indices of each equation's parents.
    parent_indices: Vec<Vec<usize>>,
    /// Equation indices in topological order of their children.
    order: Vec<usize>,
}

/// A causal graph with one fitted linear equation per endogenous feature.
/// Features without an equation are exogenous.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralModel {
    features: Vec<String>,
    graph: CausalGraph,
    equations: Vec<StructuralEquation>,
    binding: Binding,
}

impl StructuralModel {
    /// Assembles a model from given equations over `schema`'s features.
    pub fn from_equations(schema: &FeatureSchema, graph: CausalGraph, equations: Vec<StructuralEquation>) -> Result<Self> {
        graph.check_against(schema)?;
        let topo = validate_dag(&graph)?;
        let features: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
        let binding = bind(&features, &equations, &topo)?;
        Ok(Self {
            features,
            graph,
            equations,
            binding,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn equations(&self) -> &[StructuralEquation] {
        &self.equations
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn is_endogenous(&self, v: usize) -> bool {
        self.binding.equation_of.get(v).is_some_and(Option::is_some)
    }

    pub fn endogenous_indices(&self) -> Vec<usize> {
        (0..self.features.len()).filter(|&j| self.is_endogenous(j)).collect()
    }

    pub fn exogenous_indices(&self) -> Vec<usize> {
        (0..self.features.len()).filter(|&j| !self.is_endogenous(j)).collect()
    }

    pub fn equation(&self, v: usize) -> Result<&StructuralEquation> {
        match self.binding.equation_of.get(v) {
            Some(Some(e)) => Ok(&self.equations[*e]),
            Some(None) => Err(Error::Usage(format!("feature `{}` is exogenous", self.features[v]))),
            None => Err(Error::Usage(format!("feature index {v} out of range"))),
        }
    }

    /// `g_v(parent_values)`; values ordered as the equation's parents.
    pub fn predict_node(&self, v: usize, parent_values: &[f64]) -> Result<f64> {
        self.equation(v)?.evaluate(parent_values)
    }

    /// `g_v` evaluated on the parent values found in `x`.
    pub fn predict_from(&self, v: usize, x: &Instance) -> Result<f64> {
        let eq = self.equation(v)?;
        self.check_len(x)?;
        let e = self.binding.equation_of[v].expect("endogenous");
        let vals: Vec<f64> = self.binding.parent_indices[e].iter().map(|&p| x.get(p)).collect();
        eq.evaluate(&vals)
    }

    /// Replaces every mutable continuous endogenous value of `x` by its
    /// structural prediction from the (already updated) parent values, in
    /// topological order, clamped to `[0,1]`. Categorical and immutable
    /// features are left untouched.
    pub fn project(&self, schema: &FeatureSchema, x: &Instance) -> Result<Instance> {
        self.check_schema(schema)?;
        self.check_len(x)?;
        let mut out = x.clone();
        for &e in &self.binding.order {
            let eq = &self.equations[e];
            let v = self
                .binding
                .equation_of
                .iter()
                .position(|&m| m == Some(e))
                .expect("bound equation");
            let f = schema.feature(v);
            if f.is_categorical() || !f.mutable {
                continue;
            }
            let vals: Vec<f64> = self.binding.parent_indices[e].iter().map(|&p| out.get(p)).collect();
            out.0[v] = eq.evaluate(&vals)?.clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// `(g_v(parents of x_cf) - x_org[v])^2`.
    pub fn causal_distance(&self, v: usize, x_cf: &Instance, x_org: &Instance) -> Result<f64> {
        self.check_len(x_org)?;
        let r = self.predict_from(v, x_cf)? - x_org.get(v);
        Ok(r * r)
    }

    /// Feature-wise distance on exogenous features plus causal distance on
    /// endogenous features.
    pub fn final_distance(&self, ae: &Autoencoder, schema: &FeatureSchema, x_cf: &Instance, x_org: &Instance) -> Result<f64> {
        let (exo, endo) = self.distance_parts(ae, schema, x_cf, x_org)?;
        Ok(exo + endo)
    }

    /// `(exogenous sum, endogenous sum)` of the final distance.
    pub fn distance_parts(
        &self,
        ae: &Autoencoder,
        schema: &FeatureSchema,
        x_cf: &Instance,
        x_org: &Instance,
    ) -> Result<(f64, f64)> {
        self.check_schema(schema)?;
        self.check_len(x_cf)?;
        self.check_len(x_org)?;
        let mut exo = 0.0;
        let mut endo = 0.0;
        for j in 0..self.features.len() {
            if self.is_endogenous(j) {
                endo += self.causal_distance(j, x_cf, x_org)?;
            } else {
                exo += feature_distance(ae, schema, j, x_cf, x_org)?;
            }
        }
        Ok((exo, endo))
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if schema.len() != self.features.len() || schema.features.iter().zip(&self.features).any(|(f, n)| &f.name != n) {
            return Err(Error::Schema("structural model was fitted on a different feature set".into()));
        }
        Ok(())
    }

    fn check_len(&self, x: &Instance) -> Result<()> {
        if x.len() != self.features.len() {
            return Err(Error::Shape(format!(
                "instance has {} values, model expects {}",
                x.len(),
                self.features.len()
            )));
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&ModelDoc {
            version: FORMAT_VERSION,
            features: self.features.clone(),
            graph: self.graph.clone(),
            equations: self.equations.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = parse_versioned(text)?;
        let topo = validate_dag(&doc.graph)?;
        for n in &doc.graph.nodes {
            if !doc.features.contains(n) {
                return Err(Error::Parse(format!("graph node `{n}` is not a listed feature")));
            }
        }
        let binding = bind(&doc.features, &doc.equations, &topo)?;
        Ok(Self {
            features: doc.features,
            graph: doc.graph,
            equations: doc.equations,
            binding,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    features: Vec<String>,
    graph: CausalGraph,
    equations: Vec<StructuralEquation>,
}

fn bind(features: &[String], equations: &[StructuralEquation], topo: &[String]) -> Result<Binding> {
    let find = |name: &str| {
        features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{name}` in structural equation")))
    };
    let mut equation_of = vec![None; features.len()];
    let mut parent_indices = Vec::with_capacity(equations.len());
    for (e, eq) in equations.iter().enumerate() {
        if eq.coefficients.len() != eq.parents.len() {
            return Err(Error::Shape(format!(
                "equation for `{}` has {} coefficients for {} parents",
                eq.child,
                eq.coefficients.len(),
                eq.parents.len()
            )));
        }
        if eq.coefficients.iter().any(|c| !c.is_finite()) || !eq.intercept.is_finite() {
            return Err(Error::Domain(format!("equation for `{}` has non-finite terms", eq.child)));
        }
        let v = find(&eq.child)?;
        if equation_of[v].replace(e).is_some() {
            return Err(Error::Schema(format!("two equations for `{}`", eq.child)));
        }
        parent_indices.push(eq.parents.iter().map(|p| find(p)).collect::<Result<Vec<_>>>()?);
    }
    let mut order: Vec<usize> = (0..equations.len()).collect();
    let position = |name: &str| topo.iter().position(|t| t == name).unwrap_or(usize::MAX);
    order.sort_by_key(|&e| position(&equations[e].child));
    Ok(Binding {
        equation_of,
        parent_indices,
        order,
    })
}

pub fn fit_structural_model(data: &Dataset, graph: &CausalGraph) -> Result<StructuralModel> {
    fit_structural_model_with(data, graph, &FitOptions::default())
}

/// Ordinary least squares per endogenous feature, in topological order.
/// Callers pass normalized data; categorical codes are regressed as reals.
pub fn fit_structural_model_with(data: &Dataset, graph: &CausalGraph, opts: &FitOptions) -> Result<StructuralModel> {
    let schema = &data.schema;
    graph.check_against(schema)?;
    let order = validate_dag(graph)?;
    let mut equations = Vec::new();
    for child in order {
        let parents = graph.parents(&child);
        if parents.is_empty() {
            continue;
        }
        let v = schema.require_index(&child)?;
        if opts.categorical_exogenous && schema.feature(v).is_categorical() {
            log::info!("treating categorical feature `{child}` as exogenous");
            continue;
        }
        let cols = parents
            .iter()
            .map(|p| schema.require_index(p))
            .collect::<Result<Vec<_>>>()?;
        if data.len() < cols.len() + 2 {
            return Err(Error::Data(format!(
                "fitting `{child}` on {} parents needs at least {} rows, got {}",
                cols.len(),
                cols.len() + 2,
                data.len()
            )));
        }
        let x = DMatrix::from_fn(data.len(), cols.len() + 1, |i, k| {
            if k < cols.len() {
                data.rows[i].get(cols[k])
            } else {
                1.0
            }
        });
        let y = DVector::from_iterator(data.len(), data.rows.iter().map(|r| r.get(v)));
        let (beta, ridge) = least_squares(&x, &y, &child)?;
        let r_squared = r_squared(&x, &y, &beta);
        equations.push(StructuralEquation {
            child,
            parents,
            coefficients: beta.as_slice()[..cols.len()].to_vec(),
            intercept: beta[cols.len()],
            r_squared,
            ridge,
        });
    }
    StructuralModel::from_equations(schema, graph.clone(), equations)
}

/// QR least squares; falls back to ridge normal equations on rank loss.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, child: &str) -> Result<(DVector<f64>, bool)> {
    let qr = x.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|d| d.abs()).collect();
    let top = diag.iter().copied().fold(0.0, f64::max);
    if top > 0.0 && diag.iter().all(|&d| d > RANK_TOLERANCE * top) {
        let qty = qr.q().transpose() * y;
        if let Some(beta) = r.solve_upper_triangular(&qty) {
            if beta.iter().all(|b| b.is_finite()) {
                return Ok((beta, false));
            }
        }
    }
    log::warn!(
        "design matrix for `{child}` is singular; falling back to ridge regression (lambda = {RIDGE_LAMBDA:e})"
    );
    let p = x.ncols();
    let gram = x.transpose() * x + DMatrix::<f64>::identity(p, p) * RIDGE_LAMBDA;
    let beta = gram
        .cholesky()
        .map(|c| c.solve(&(x.transpose() * y)))
        .ok_or_else(|| Error::Domain(format!("ridge system for `{child}` is not positive definite")))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Domain(format!("ridge fit for `{child}` produced non-finite coefficients")));
    }
    Ok((beta, true))
}

fn r_squared(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let resid = y - x * beta;
    let ss_res = resid.norm_squared();
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}
