//! End-to-end counterfactual search: initialization around `x_org`, the
//! generational NSGA-II loop, decoding and final selection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::causal::StructuralModel;
use crate::data::{Dataset, FeatureSchema, Instance};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, Classifier};
use crate::moo::{
    crossover, environmental_selection, mutate, other_category, rank_population, Candidate, GaConfig, Population,
    Ranking,
};
use crate::objectives::{EvalContext, ObjectiveVector, PrototypeContext, DEFAULT_K};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRequest {
    /// Normalized original instance.
    pub x_org: Instance,
    pub y_org: u8,
    pub y_cf: u8,
    pub ga: GaConfig,
    pub k: usize,
}

impl ExplainRequest {
    /// Request for the opposite of `y_org` with default search settings.
    pub fn flip(x_org: Instance, y_org: u8) -> Self {
        Self {
            x_org,
            y_org,
            y_cf: 1 - y_org.min(1),
            ga: GaConfig::default(),
            k: DEFAULT_K,
        }
    }
}

/// Trained artefacts sharing one schema. `data` is the normalized reference
/// set used for latent neighbours.
#[derive(Debug, Clone, Copy)]
pub struct ModelBundle<'a> {
    pub classifier: &'a Classifier,
    pub ae: &'a Autoencoder,
    pub model: &'a StructuralModel,
    pub data: &'a Dataset,
}

impl ModelBundle<'_> {
    pub fn schema(&self) -> &FeatureSchema {
        &self.data.schema
    }

    pub fn check(&self) -> Result<()> {
        let schema = self.schema();
        if !self.data.is_normalized() {
            return Err(Error::Usage("reference dataset must be normalized".into()));
        }
        if self.classifier.schema_fingerprint() != schema.fingerprint() {
            return Err(Error::Schema("classifier was trained on a different schema".into()));
        }
        if !self.ae.is_trained() {
            return Err(Error::Usage("autoencoder is untrained".into()));
        }
        self.model.check_schema(schema)
    }
}

/// One row of the per-feature change table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub feature: String,
    pub original: DeltaValue,
    pub counterfactual: DeltaValue,
    /// Numeric change for continuous features; absent for categorical ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaValue {
    Number(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub tool_version: String,
    /// Normalized original and counterfactual.
    pub x_org: Instance,
    pub x_cf: Instance,
    /// Same instances on the raw data scale, when a normalizer is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_org_raw: Option<Instance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_cf_raw: Option<Instance>,
    pub deltas: Vec<FeatureDelta>,
    pub objectives: ObjectiveVector,
    /// Classifier output `P(y = 1)` at `x_cf`.
    pub probability: f64,
    pub valid: bool,
    pub y_org: u8,
    pub y_cf: u8,
    pub generations_run: usize,
    pub seed: u64,
    pub neighbors: Vec<usize>,
    pub config_echo: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl ExplanationReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// State handed to an observer after each generation's selection.
#[derive(Debug)]
pub struct GenerationSnapshot<'a> {
    pub generation: usize,
    pub population: &'a [Candidate],
    pub ranking: &'a Ranking,
}

/// Initial population: `x_org` as member 0, then continuous genes drawn from
/// `N(x_org[j], init_sigma^2)` clamped to `[0,1]` and categorical genes kept
/// with probability `categorical_keep_prob`, else replaced uniformly.
pub fn init_population<R: Rng + ?Sized>(x_org: &Instance, schema: &FeatureSchema, ga: &GaConfig, rng: &mut R) -> Population {
    let noise = Normal::new(0.0, ga.init_sigma).expect("validated sigma");
    let mut pop = Vec::with_capacity(ga.population_size);
    pop.push(Candidate::new(x_org.values().to_vec()));
    while pop.len() < ga.population_size {
        let genes = schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let v = x_org.get(j);
                if !f.mutable {
                    v
                } else if f.is_categorical() {
                    if rng.random::<f64>() < ga.categorical_keep_prob {
                        v
                    } else {
                        other_category(v as usize, f.categories.len(), rng) as f64
                    }
                } else {
                    (v + noise.sample(rng)).clamp(0.0, 1.0)
                }
            })
            .collect();
        pop.push(Candidate::new(genes));
    }
    pop
}

/// Maps genes onto a schema-valid normalized instance.
pub fn decode(genes: &[f64], schema: &FeatureSchema, x_org: &Instance) -> Result<Instance> {
    if genes.len() != schema.len() || x_org.len() != schema.len() {
        return Err(Error::Shape(format!(
            "{} genes for a {}-feature schema",
            genes.len(),
            schema.len()
        )));
    }
    let values = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let g = genes[j];
            if !f.mutable {
                Ok(x_org.get(j))
            } else if f.is_categorical() {
                if g.fract() != 0.0 || g < 0.0 || g as usize >= f.categories.len() {
                    Err(Error::Domain(format!("gene {g} is not a category of `{}`", f.name)))
                } else {
                    Ok(g)
                }
            } else if g.is_nan() {
                Err(Error::Domain(format!("gene for `{}` is NaN", f.name)))
            } else {
                Ok(g.clamp(0.0, 1.0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance::new(values))
}

/// Among `F_1`, the valid candidate with the smallest distance, then the
/// smallest prediction loss, then the lowest index. With no valid member the
/// first population member is returned together with `false`.
pub fn select_final(population: &[Candidate], ranking: &Ranking, valid: &[bool]) -> (usize, bool) {
    let first = ranking.fronts.first().cloned().unwrap_or_default();
    let best = first.iter().copied().filter(|&i| valid[i]).min_by(|&a, &b| {
        let (oa, ob) = (objectives_of(&population[a]), objectives_of(&population[b]));
        oa.f_dist_final
            .total_cmp(&ob.f_dist_final)
            .then(oa.f_pred.total_cmp(&ob.f_pred))
            .then(a.cmp(&b))
    });
    match best {
        Some(i) => (i, true),
        None => (0, false),
    }
}

fn objectives_of(c: &Candidate) -> ObjectiveVector {
    c.objectives.expect("evaluated candidate")
}

pub fn run_proce(request: &ExplainRequest, bundle: &ModelBundle<'_>) -> Result<ExplanationReport> {
    run_proce_with_observer(request, bundle, |_| {})
}

pub fn run_proce_with_observer<F>(request: &ExplainRequest, bundle: &ModelBundle<'_>, mut observer: F) -> Result<ExplanationReport>
where
    F: FnMut(&GenerationSnapshot<'_>),
{
    let ga = &request.ga;
    ga.validate()?;
    bundle.check()?;
    if request.y_org > 1 || request.y_cf > 1 || request.y_org == request.y_cf {
        return Err(Error::Usage(format!(
            "classes must be distinct binary labels, got {} -> {}",
            request.y_org, request.y_cf
        )));
    }
    let schema = bundle.schema();
    let x_org = &request.x_org;
    x_org.validate(schema, true)?;

    let proto = PrototypeContext::build(bundle.data, bundle.ae, x_org, request.y_org, request.y_cf, request.k)?;
    let ctx = EvalContext {
        classifier: bundle.classifier,
        ae: bundle.ae,
        model: bundle.model,
        schema,
        proto: &proto.proto,
        x_org,
        y_cf: request.y_cf,
    };
    let evaluate = |pop: &mut [Candidate]| -> Result<()> {
        for c in pop.iter_mut().filter(|c| c.objectives.is_none()) {
            let mut x = decode(&c.genes, schema, x_org)?;
            if ga.causal_projection {
                x = bundle.model.project(schema, &x)?;
            }
            c.genes = x.0;
            c.objectives = Some(ctx.evaluate(&Instance::new(c.genes.clone()))?);
        }
        Ok(())
    };
    let is_valid = |c: &Candidate| -> Result<bool> {
        Ok(bundle.classifier.predict(&Instance::new(c.genes.clone()))? == request.y_cf)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(ga.seed);
    let mut pop = init_population(x_org, schema, ga, &mut rng);
    evaluate(&mut pop)?;
    let mut ranking = assign_ranks(&mut pop, ga);
    let mutable: Vec<bool> = schema.features.iter().map(|f| f.mutable).collect();

    let mut generations_run = 0;
    let mut last_pick: Option<Vec<f64>> = None;
    let mut unchanged = 0usize;
    for generation in 1..=ga.generations {
        // Offspring: random disjoint pairs of the survivors.
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.shuffle(&mut rng);
        let mut offspring = Vec::with_capacity(pop.len());
        for pair in order.chunks(2) {
            let (a, b) = (&pop[pair[0]].genes, &pop[pair[pair.len() - 1]].genes);
            let (mut x, mut y) = crossover(a, b, &mutable, ga.crossover_prob, &mut rng);
            mutate(&mut x, schema, ga, &mut rng);
            mutate(&mut y, schema, ga, &mut rng);
            offspring.push(Candidate::new(x));
            offspring.push(Candidate::new(y));
        }
        offspring.truncate(pop.len());
        evaluate(&mut offspring)?;

        let mut merged = pop;
        merged.extend(offspring);
        let merged_ranking = rank_population(&objective_rows(&merged), ga.crowding);
        let survivors = environmental_selection(&merged_ranking, ga.population_size)?;
        pop = survivors
            .iter()
            .map(|&i| {
                let mut c = merged[i].clone();
                c.rank = Some(merged_ranking.rank[i]);
                c.crowding = Some(merged_ranking.crowding[i]);
                c
            })
            .collect();
        ranking = assign_ranks(&mut pop, ga);
        generations_run = generation;
        observer(&GenerationSnapshot {
            generation,
            population: &pop,
            ranking: &ranking,
        });

        if ga.early_stop_patience > 0 {
            let valid = pop.iter().map(is_valid).collect::<Result<Vec<_>>>()?;
            let (pick, ok) = select_final(&pop, &ranking, &valid);
            let genes = pop[pick].genes.clone();
            if ok && last_pick.as_ref() == Some(&genes) {
                unchanged += 1;
            } else {
                unchanged = 0;
            }
            last_pick = ok.then_some(genes);
            if unchanged >= ga.early_stop_patience {
                log::info!("early stop after {generation} generations");
                break;
            }
        }
    }

    let valid = pop.iter().map(is_valid).collect::<Result<Vec<_>>>()?;
    let (pick, ok) = select_final(&pop, &ranking, &valid);
    let x_cf = Instance::new(pop[pick].genes.clone());
    let probability = bundle.classifier.predict_proba(&x_cf)?;
    build_report(
        bundle,
        request,
        x_cf,
        objectives_of(&pop[pick]),
        probability,
        ok,
        generations_run,
        proto.neighbor_indices,
    )
}

fn objective_rows(pop: &[Candidate]) -> Vec<[f64; 3]> {
    pop.iter().map(|c| objectives_of(c).as_array()).collect()
}

/// Ranks `pop` in place. Members keep their order, so front lists index `pop`.
fn assign_ranks(pop: &mut [Candidate], ga: &GaConfig) -> Ranking {
    let ranking = rank_population(&objective_rows(pop), ga.crowding);
    for (i, c) in pop.iter_mut().enumerate() {
        c.rank = Some(ranking.rank[i]);
        c.crowding = Some(ranking.crowding[i]);
    }
    ranking
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    bundle: &ModelBundle<'_>,
    request: &ExplainRequest,
    x_cf: Instance,
    objectives: ObjectiveVector,
    probability: f64,
    valid: bool,
    generations_run: usize,
    neighbors: Vec<usize>,
) -> Result<ExplanationReport> {
    let schema = bundle.schema();
    let normalizer = bundle.data.normalizer.as_ref();
    let (org_raw, cf_raw) = match normalizer {
        Some(n) => (Some(n.denormalize(&request.x_org)?), Some(n.denormalize(&x_cf)?)),
        None => (None, None),
    };
    let view_org = org_raw.as_ref().unwrap_or(&request.x_org);
    let view_cf = cf_raw.as_ref().unwrap_or(&x_cf);
    let deltas = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            if f.is_categorical() {
                let (a, b) = (request.x_org.category(j), x_cf.category(j));
                FeatureDelta {
                    feature: f.name.clone(),
                    original: DeltaValue::Category(f.categories[a].clone()),
                    counterfactual: DeltaValue::Category(f.categories[b].clone()),
                    delta: None,
                    changed: a != b,
                }
            } else {
                let (a, b) = (view_org.get(j), view_cf.get(j));
                FeatureDelta {
                    feature: f.name.clone(),
                    original: DeltaValue::Number(a),
                    counterfactual: DeltaValue::Number(b),
                    delta: Some(b - a),
                    changed: request.x_org.get(j) != x_cf.get(j),
                }
            }
        })
        .collect();
    Ok(ExplanationReport {
        tool_version: TOOL_VERSION.to_string(),
        x_org: request.x_org.clone(),
        x_cf,
        x_org_raw: org_raw,
        x_cf_raw: cf_raw,
        deltas,
        objectives,
        probability,
        valid,
        y_org: request.y_org,
        y_cf: request.y_cf,
        generations_run,
        seed: request.ga.seed,
        neighbors,
        config_echo: serde_json::json!({ "ga": request.ga, "k": request.k }),
        runtime_seconds: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Feature;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            Feature::continuous("x"),
            Feature::continuous("age").immutable(),
            Feature::categorical("c", ["a", "b", "c"]),
        ])
        .unwrap()
    }

    #[test]
    fn zero_spread_gives_copies_of_original() {
        let ga = GaConfig {
            population_size: 8,
            init_sigma: 0.0,
            categorical_keep_prob: 1.0,
            ..GaConfig::default()
        };
        let x = Instance::new(vec![0.3, 0.6, 2.0]);
        let pop = init_population(&x, &schema(), &ga, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(pop.len(), 8);
        assert!(pop.iter().all(|c| c.genes == x.values()));
    }

    #[test]
    fn member_zero_is_original_and_immutables_fixed() {
        let ga = GaConfig {
            population_size: 50,
            init_sigma: 0.5,
            ..GaConfig::default()
        };
        let x = Instance::new(vec![0.3, 0.6, 2.0]);
        let pop = init_population(&x, &schema(), &ga, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(pop[0].genes, x.values());
        assert!(pop.iter().all(|c| c.genes[1] == 0.6 && (0.0..=1.0).contains(&c.genes[0])));
    }

    #[test]
    fn continuous_gene_mean_within_clt_bound() {
        let nu = 0.1;
        let ga = GaConfig {
            population_size: 10_000,
            init_sigma: nu,
            ..GaConfig::default()
        };
        let x = Instance::new(vec![0.5, 0.6, 0.0]);
        let pop = init_population(&x, &schema(), &ga, &mut ChaCha8Rng::seed_from_u64(4));
        let mean = pop.iter().map(|c| c.genes[0]).sum::<f64>() / pop.len() as f64;
        assert!((mean - 0.5).abs() < 3.0 * nu / 100.0, "{mean}");
    }

    #[test]
    fn decode_rules() {
        let s = schema();
        let x = Instance::new(vec![0.3, 0.6, 2.0]);
        assert_eq!(decode(&[1.3, 0.1, 0.0], &s, &x).unwrap().values(), &[1.0, 0.6, 0.0]);
        assert_eq!(decode(&[0.4, 0.6, 1.0], &s, &x).unwrap().values(), &[0.4, 0.6, 1.0]);
        assert!(matches!(decode(&[0.4, 0.6, 3.0], &s, &x), Err(Error::Domain(_))));
        assert!(matches!(decode(&[0.4, 0.6, 0.5], &s, &x), Err(Error::Domain(_))));
    }

    fn evaluated(objs: &[[f64; 3]]) -> (Vec<Candidate>, Ranking) {
        let pop: Vec<Candidate> = objs
            .iter()
            .map(|o| Candidate {
                objectives: Some(ObjectiveVector::new(o[0], o[1], o[2])),
                ..Candidate::new(vec![])
            })
            .collect();
        let ranking = rank_population(objs, Default::default());
        (pop, ranking)
    }

    #[test]
    fn select_final_prefers_valid_then_distance() {
        let (pop, r) = evaluated(&[[0.1, 1.0, 0.5], [0.5, 0.5, 0.2], [0.9, 0.1, 0.1]]);
        assert_eq!(select_final(&pop, &r, &[false, true, false]), (1, true));
        assert_eq!(select_final(&pop, &r, &[false, true, true]), (2, true));
        assert_eq!(select_final(&pop, &r, &[false; 3]), (0, false));
    }
}
