//! Oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use proce::causal::{fit_structural_model, CausalGraph, StructuralEquation, StructuralModel};
use proce::data::{Dataset, Feature, FeatureSchema, Instance};
use proce::models::{Autoencoder, AutoencoderConfig};
use proce::moo::dominates;
use proce::nn::{Activation, DenseLayer, Matrix, MlpNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(n^2 H) front peeling: each front is every remaining member that no
/// remaining member dominates, in index order.
pub fn peel<P: AsRef<[f64]>>(points: &[P]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(points[j].as_ref(), points[i].as_ref())))
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Two-sided Student-t tail probability by Simpson integration. With
/// `x = sqrt(df) tan(theta)` the density kernel becomes `cos(theta)^(df-1)`,
/// so `p = int_{theta_t}^{pi/2} cos^(df-1) / int_0^{pi/2} cos^(df-1)`,
/// which needs no gamma function.
pub fn t_two_sided_oracle(t: f64, df: f64) -> f64 {
    let kernel = |theta: f64| theta.cos().powf(df - 1.0);
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = kernel(a) + kernel(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * kernel(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta_t = (t.abs() / df.sqrt()).atan();
    simpson(theta_t, half_pi) / simpson(0.0, half_pi)
}

pub fn continuous_schema(d: usize) -> FeatureSchema {
    FeatureSchema::new((0..d).map(|j| Feature::continuous(format!("x{j}"))).collect()).unwrap()
}

fn diagonal_layer(d: usize, scale: f64, activation: Activation) -> DenseLayer {
    let mut w = vec![0.0; d * d];
    for j in 0..d {
        w[j * d + j] = scale;
    }
    DenseLayer::new(Matrix::from_vec(d, d, w).unwrap(), vec![0.0; d], activation, 0.0).unwrap()
}

/// Continuous-only autoencoder whose reconstruction is `scale * x` on
/// `[0,1]^d`: every layer is diagonal, and ReLU is the identity on
/// nonnegative inputs.
pub fn scaled_autoencoder(schema: &FeatureSchema, scale: f64) -> Autoencoder {
    let d = schema.len();
    let cfg = AutoencoderConfig {
        embedding_dim: d,
        category_width: 1,
        hidden: d,
    };
    let encoder = MlpNetwork::from_layers(
        d,
        vec![diagonal_layer(d, 1.0, Activation::Relu), diagonal_layer(d, 1.0, Activation::Identity)],
    )
    .unwrap();
    let decoder = MlpNetwork::from_layers(
        d,
        vec![diagonal_layer(d, 1.0, Activation::Relu), diagonal_layer(d, scale, Activation::Identity)],
    )
    .unwrap();
    Autoencoder::new(schema, &cfg, 0)
        .unwrap()
        .with_networks(encoder, decoder, 1)
        .unwrap()
}

/// A random linear SCM with known equations and noiseless data.
pub struct RandomScm {
    pub schema: FeatureSchema,
    pub graph: CausalGraph,
    pub truth: Vec<StructuralEquation>,
    pub data: Dataset,
}

/// Column rank by Gaussian elimination with partial pivoting.
fn rank(mut m: Vec<Vec<f64>>) -> usize {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else {
            break;
        };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(r, p);
        let pivot = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r {
                let f = row[c] / pivot[c];
                for (x, y) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *x -= f * y;
                }
            }
        }
        r += 1;
    }
    r
}

/// Samples a DAG over 2..=6 nodes (edges only from earlier to later nodes
/// in a random order), random coefficients and intercepts, and `rows`
/// uniform root draws propagated exactly. Graphs whose equations are not
/// identifiable (a parent set that is affinely dependent as a function of
/// the roots) are rejected and redrawn, since their coefficients are not
/// unique.
pub fn random_scm<R: Rng>(rng: &mut R, rows: usize) -> RandomScm {
    loop {
        let n = rng.random_range(2..=6usize);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let names: Vec<String> = (0..n).map(|j| format!("v{j}")).collect();
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (pos, &child) in order.iter().enumerate() {
            for &p in &order[..pos] {
                if rng.random::<f64>() < 0.5 {
                    parents[child].push(p);
                }
            }
            parents[child].sort_unstable();
        }
        let roots: Vec<usize> = (0..n).filter(|&j| parents[j].is_empty()).collect();
        // Affine form of each node over (1, roots).
        let mut form: Vec<Vec<f64>> = vec![vec![0.0; roots.len() + 1]; n];
        for (k, &r) in roots.iter().enumerate() {
            form[r][k + 1] = 1.0;
        }
        let mut truth = Vec::new();
        let mut identifiable = true;
        for &child in &order {
            if parents[child].is_empty() {
                continue;
            }
            let coefficients: Vec<f64> = parents[child].iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            let intercept = rng.random_range(-1.0..1.0);
            let mut f = vec![0.0; roots.len() + 1];
            f[0] = intercept;
            for (&p, &c) in parents[child].iter().zip(&coefficients) {
                for (a, b) in f.iter_mut().zip(&form[p]) {
                    *a += c * b;
                }
            }
            form[child] = f;
            // Design columns (parents..., 1) expressed over the basis (1, roots).
            let mut design: Vec<Vec<f64>> = vec![Vec::new(); roots.len() + 1];
            for &p in &parents[child] {
                for (row, v) in design.iter_mut().zip(&form[p]) {
                    row.push(*v);
                }
            }
            design[0].push(1.0);
            for row in design.iter_mut().skip(1) {
                row.push(0.0);
            }
            if rank(design) < parents[child].len() + 1 {
                identifiable = false;
            }
            truth.push(StructuralEquation {
                child: names[child].clone(),
                parents: parents[child].iter().map(|&p| names[p].clone()).collect(),
                coefficients,
                intercept,
                r_squared: 1.0,
                ridge: false,
            });
        }
        if !identifiable {
            continue;
        }
        let mut data_rows = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut x = vec![0.0; n];
            for &r in &roots {
                x[r] = rng.random::<f64>();
            }
            for eq in &truth {
                let child = names.iter().position(|s| s == &eq.child).unwrap();
                x[child] = eq.intercept
                    + parents[child]
                        .iter()
                        .zip(&eq.coefficients)
                        .map(|(&p, c)| c * x[p])
                        .sum::<f64>();
            }
            data_rows.push(Instance::new(x));
        }
        let edges = (0..n)
            .flat_map(|c| parents[c].iter().map(move |&p| (p, c)))
            .map(|(p, c)| (names[p].clone(), names[c].clone()))
            .collect();
        let schema = FeatureSchema::new(names.iter().map(Feature::continuous).collect()).unwrap();
        let labels = vec![0; rows];
        return RandomScm {
            graph: CausalGraph::new(names.clone(), edges).unwrap(),
            data: Dataset::new(schema.clone(), data_rows, labels).unwrap(),
            schema,
            truth,
        };
    }
}

/// Smallest |preactivation| over every ReLU unit of `net` at input `x`.
pub fn relu_margin(net: &MlpNetwork, x: &[f64]) -> f64 {
    let mut h = x.to_vec();
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        let mut z = layer.weights.matvec(&h).unwrap();
        for (v, b) in z.iter_mut().zip(&layer.bias) {
            *v += b;
        }
        if layer.activation == Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        }
        h = z.iter().map(|&v| layer.activation.apply(v)).collect();
    }
    margin
}

/// A random dense network with 1..=5 layers of width 1..=64, random hidden
/// activations, biases drawn from U(-0.5, 0.5), and either a sigmoid head
/// (for cross-entropy) or a linear head (for squared error). Returns the
/// network, one input in [0,1]^d and one target. Draws with a ReLU
/// preactivation within `1e-3` of the kink are redrawn: the loss is not
/// differentiable there, so a finite-difference comparison is meaningless.
pub fn random_net<R: Rng>(rng: &mut R) -> (MlpNetwork, Vec<f64>, Vec<f64>, proce::nn::Loss) {
    use proce::nn::{LayerSpec, Loss};
    loop {
        let depth = rng.random_range(1..=5usize);
        let input = rng.random_range(1..=64usize);
        let bce = rng.random::<bool>();
        let mut specs: Vec<LayerSpec> = (0..depth - 1)
            .map(|_| {
                let act = [Activation::Relu, Activation::Sigmoid, Activation::Identity][rng.random_range(0..3)];
                LayerSpec::new(rng.random_range(1..=64), act, 0.0)
            })
            .collect();
        let (head, loss, out) = if bce {
            (Activation::Sigmoid, Loss::BinaryCrossEntropy, 1)
        } else {
            (Activation::Identity, Loss::Mse, rng.random_range(1..=64))
        };
        specs.push(LayerSpec::new(out, head, 0.0));
        let mut net = MlpNetwork::new(input, &specs, rng).unwrap();
        for layer in net.layers_mut() {
            for b in layer.bias.iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let x: Vec<f64> = (0..input).map(|_| rng.random::<f64>()).collect();
        let target: Vec<f64> = if bce {
            vec![f64::from(rng.random_range(0..2u8))]
        } else {
            (0..out).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        if relu_margin(&net, &x) >= 1e-3 {
            return (net, x, target, loss);
        }
    }
}

/// Fourth-order central difference of the loss with respect to every
/// parameter, in buffer order.
pub fn numeric_gradient(net: &MlpNetwork, x: &[f64], target: &[f64], loss: proce::nn::Loss, h: f64) -> Vec<f64> {
    let mut probe = net.clone();
    let mut out = Vec::new();
    for b in 0..probe.param_buffers_mut().len() {
        for k in 0..probe.param_buffers_mut()[b].len() {
            let orig = probe.param_buffers_mut()[b][k];
            let mut at = |offset: f64| {
                probe.param_buffers_mut()[b][k] = orig + offset;
                loss.value(&probe.forward(x).unwrap(), target)
            };
            let g = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            probe.param_buffers_mut()[b][k] = orig;
            out.push(g);
        }
    }
    out
}

/// Five features `a, c, b, v, w` (c categorical) with edges a->v, b->v,
/// v->w, c->w, fitted on 60 noisy rows, plus an untrained autoencoder.
pub fn mixed_scm_fixture() -> (FeatureSchema, StructuralModel, Autoencoder) {
    let schema = FeatureSchema::new(vec![
        Feature::continuous("a"),
        Feature::categorical("c", ["p", "q", "r"]),
        Feature::continuous("b"),
        Feature::continuous("v"),
        Feature::continuous("w"),
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Instance> = (0..60)
        .map(|_| {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let c = rng.random_range(0..3) as f64;
            let v = 0.3 * a - 0.2 * b + 0.1 + 0.05 * rng.random::<f64>();
            let w = 0.5 * v + 0.1 * c + 0.02 * rng.random::<f64>();
            Instance::new(vec![a, c, b, v, w])
        })
        .collect();
    let data = Dataset::new(schema.clone(), rows, vec![0; 60]).unwrap();
    let graph = CausalGraph::new(
        ["a", "c", "b", "v", "w"].map(String::from).to_vec(),
        vec![
            ("a".into(), "v".into()),
            ("b".into(), "v".into()),
            ("v".into(), "w".into()),
            ("c".into(), "w".into()),
        ],
    )
    .unwrap();
    let model = fit_structural_model(&data, &graph).unwrap();
    let ae = Autoencoder::new(
        &schema,
        &AutoencoderConfig {
            embedding_dim: 4,
            category_width: 3,
            hidden: 6,
        },
        9,
    )
    .unwrap();
    (schema, model, ae)
}

/// Uniform instance for [`mixed_scm_fixture`].
pub fn mixed_scm_instance(rng: &mut ChaCha8Rng) -> Instance {
    Instance::new(vec![
        rng.random(),
        rng.random_range(0..3) as f64,
        rng.random(),
        rng.random(),
        rng.random(),
    ])
}


/// Hand evaluation of the final distance for [`mixed_scm_fixture`]: squared
/// differences on `a, b`, the embedding distance on `c`, and the squared
/// residual of each fitted equation evaluated on `x_cf` against `x_org` for
/// `v, w`.
pub fn decomposition_oracle(
    schema: &FeatureSchema,
    model: &StructuralModel,
    ae: &Autoencoder,
    x_cf: &Instance,
    x_org: &Instance,
) -> f64 {
    let mut oracle = 0.0;
    for (j, f) in schema.features.iter().enumerate() {
        oracle += match f.name.as_str() {
            "a" | "b" => (x_cf.get(j) - x_org.get(j)).powi(2),
            "c" => ae.cat_embed_distance(j, x_cf.category(j), x_org.category(j)).unwrap(),
            name => {
                let eq = model.equations().iter().find(|e| e.child == name).unwrap();
                let g = eq.intercept
                    + eq.parents
                        .iter()
                        .zip(&eq.coefficients)
                        .map(|(p, k)| k * x_cf.get(schema.index_of(p).unwrap()))
                        .sum::<f64>();
                (g - x_org.get(j)).powi(2)
            }
        };
    }
    oracle
}
