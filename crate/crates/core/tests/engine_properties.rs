use proce::causal::{CausalGraph, StructuralModel};
use proce::data::{Dataset, Feature, FeatureSchema, Instance, Normalizer};
use proce::engine::{run_proce, run_proce_with_observer, ExplainRequest, ModelBundle};
use proce::models::{train_autoencoder, Autoencoder, AutoencoderConfig, ClassWeight, Classifier, Preset};
use proce::moo::{dominates, GaConfig};
use proce::nn::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    classifier: Classifier,
    ae: Autoencoder,
    model: StructuralModel,
    data: Dataset,
}

impl Fixture {
    fn bundle(&self) -> ModelBundle<'_> {
        ModelBundle {
            classifier: &self.classifier,
            ae: &self.ae,
            model: &self.model,
            data: &self.data,
        }
    }
}

fn fixture(raw: Dataset, epochs: usize) -> Fixture {
    let norm = Normalizer::fit(&raw).unwrap();
    let data = raw.normalized(&norm).unwrap();
    let schema = data.schema.clone();
    let mut classifier = Classifier::new(Preset::Net3, &schema, 1).unwrap();
    let cfg = TrainConfig {
        epochs,
        learning_rate: 1e-2,
        batch_size: 16,
        seed: 2,
        ..TrainConfig::default()
    };
    classifier.train(&data, &cfg, ClassWeight::Balanced).unwrap();
    let ae_cfg = AutoencoderConfig {
        embedding_dim: 4,
        category_width: 2,
        hidden: 8,
    };
    let (ae, _) = train_autoencoder(&data, &ae_cfg, &TrainConfig { epochs: 5, seed: 3, ..TrainConfig::default() }).unwrap();
    let names = schema.features.iter().map(|f| f.name.clone()).collect();
    let model = StructuralModel::from_equations(&schema, CausalGraph::new(names, vec![]).unwrap(), vec![]).unwrap();
    Fixture {
        classifier,
        ae,
        model,
        data,
    }
}

/// 1-D grid on [0,1] labelled by `x > 0.5`.
fn line_fixture() -> Fixture {
    let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
    let rows: Vec<Instance> = (0..=200).map(|i| Instance::new(vec![i as f64 / 200.0])).collect();
    let labels = rows.iter().map(|x| u8::from(x.get(0) > 0.5)).collect();
    fixture(Dataset::new(schema, rows, labels).unwrap(), 300)
}

fn mixed_fixture() -> Fixture {
    let schema = FeatureSchema::new(vec![
        Feature::continuous("a"),
        Feature::categorical("c", ["p", "q", "r"]),
        Feature::continuous("b").immutable(),
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Instance> = (0..300)
        .map(|_| Instance::new(vec![rng.random(), rng.random_range(0..3) as f64, rng.random()]))
        .collect();
    let labels = rows.iter().map(|x| u8::from(x.get(0) + 0.5 * x.get(2) > 0.75)).collect();
    fixture(Dataset::new(schema, rows, labels).unwrap(), 60)
}

fn small_ga(generations: usize, seed: u64) -> GaConfig {
    GaConfig {
        population_size: 30,
        generations,
        seed,
        ..GaConfig::default()
    }
}

#[test]
fn one_dimensional_toy_finds_the_valid_region() {
    let fx = line_fixture();
    // Exhaustive scan: the classifier must reproduce the labelling rule away
    // from the boundary before the search is asked to cross it.
    let mut lowest_positive = f64::INFINITY;
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        let y = fx.classifier.predict(&Instance::new(vec![x])).unwrap();
        if (x - 0.5).abs() > 0.05 {
            assert_eq!(y, u8::from(x > 0.5), "classifier disagrees at {x}");
        }
        if y == 1 {
            lowest_positive = lowest_positive.min(x);
        }
    }
    assert!(lowest_positive.is_finite());

    let x_org = Instance::new(vec![0.2]);
    assert_eq!(fx.classifier.predict(&x_org).unwrap(), 0);
    let request = ExplainRequest {
        x_org,
        y_org: 0,
        y_cf: 1,
        ga: small_ga(20, 5),
        k: 10,
    };
    let report = run_proce(&request, &fx.bundle()).unwrap();
    assert!(report.valid);
    assert_eq!(fx.classifier.predict(&report.x_cf).unwrap(), 1);
    assert!(report.x_cf.get(0) > 0.5, "x_cf {}", report.x_cf.get(0));
    assert!(report.x_cf.get(0) >= lowest_positive - 1e-3);
    assert_eq!(report.generations_run, 20);
}

#[test]
fn zero_generations_returns_initial_selection() {
    let fx = line_fixture();
    let request = ExplainRequest {
        x_org: Instance::new(vec![0.2]),
        y_org: 0,
        y_cf: 1,
        ga: small_ga(0, 5),
        k: 10,
    };
    let report = run_proce(&request, &fx.bundle()).unwrap();
    assert_eq!(report.generations_run, 0);
}

#[test]
fn selection_never_drops_to_a_dominated_front() {
    let fx = mixed_fixture();
    let x_org = fx.data.rows[0].clone();
    let y_org = fx.classifier.predict(&x_org).unwrap();
    let request = ExplainRequest {
        ga: small_ga(25, 6),
        k: 10,
        ..ExplainRequest::flip(x_org, y_org)
    };
    let mut previous: Option<Vec<[f64; 3]>> = None;
    let mut checked = 0;
    run_proce_with_observer(&request, &fx.bundle(), |snap| {
        let objs: Vec<[f64; 3]> = snap.population.iter().map(|c| c.objectives.unwrap().as_array()).collect();
        if let Some(prev) = &previous {
            for &i in &snap.ranking.fronts[0] {
                assert!(
                    !prev.iter().any(|q| dominates(q, &objs[i])),
                    "generation {} front member dominated by a parent",
                    snap.generation
                );
            }
            checked += 1;
        }
        previous = Some(objs);
    })
    .unwrap();
    assert_eq!(checked, 24);
}

#[test]
fn mixed_schema_counterfactual_is_well_formed_and_deterministic() {
    let fx = mixed_fixture();
    for (row, seed) in [(0usize, 1u64), (5, 2), (11, 3)] {
        let x_org = fx.data.rows[row].clone();
        let y_org = fx.classifier.predict(&x_org).unwrap();
        let request = ExplainRequest {
            ga: small_ga(15, seed),
            k: 10,
            ..ExplainRequest::flip(x_org.clone(), y_org)
        };
        let a = run_proce(&request, &fx.bundle()).unwrap();
        let b = run_proce(&request, &fx.bundle()).unwrap();
        assert_eq!(a.to_json_pretty(), b.to_json_pretty());
        a.x_cf.validate(&fx.data.schema, true).unwrap();
        assert_eq!(a.x_cf.get(2), x_org.get(2));
        assert_eq!(a.valid, fx.classifier.predict(&a.x_cf).unwrap() == a.y_cf);
    }
}
