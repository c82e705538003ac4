//! NSGA-II building blocks: Pareto dominance (minimization), fast
//! non-dominated sorting, crowding distance, environmental selection and
//! the variation operators.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::FeatureSchema;
use crate::error::{Error, Result};
use crate::objectives::ObjectiveVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrowdingKind {
    /// Spread between each member's two Euclidean-nearest front neighbours.
    #[default]
    Nearest,
    /// Classic NSGA-II sorted-neighbour crowding.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability.
    pub mutation_prob: f64,
    /// Standard deviation of the Gaussian step on continuous genes.
    pub mutation_sigma: f64,
    /// Standard deviation of the initial population around `x_org`.
    pub init_sigma: f64,
    /// Probability that an initial categorical gene keeps `x_org`'s category.
    pub categorical_keep_prob: f64,
    pub crowding: CrowdingKind,
    /// Set mutable continuous endogenous features to their structural
    /// prediction from the candidate's own parent values.
    pub causal_projection: bool,
    /// Stop once the selected candidate is valid and unchanged this many generations (0 disables).
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 100,
            crossover_prob: 0.9,
            mutation_prob: 0.2,
            mutation_sigma: 0.1,
            init_sigma: 0.1,
            categorical_keep_prob: 0.8,
            crowding: CrowdingKind::Nearest,
            causal_projection: true,
            early_stop_patience: 0,
            seed: 0,
        }
    }
}

/// Patience used when early stopping is switched on without an explicit value.
pub const EARLY_STOP_PATIENCE: usize = 10;

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "population size must be even and >= 4, got {}",
                self.population_size
            )));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("categorical_keep_prob", self.categorical_keep_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        for (name, s) in [("mutation_sigma", self.mutation_sigma), ("init_sigma", self.init_sigma)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// One member of the search population. Genes hold a normalized value per
/// continuous feature and a category index per categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub genes: Vec<f64>,
    pub objectives: Option<ObjectiveVector>,
    pub rank: Option<usize>,
    pub crowding: Option<f64>,
}

impl Candidate {
    pub fn new(genes: Vec<f64>) -> Self {
        Self {
            genes,
            objectives: None,
            rank: None,
            crowding: None,
        }
    }
}

pub type Population = Vec<Candidate>;

/// `a` dominates `b` under minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strictly |= x < y;
    }
    strictly
}

/// Fronts `F_1..F_H` as index lists, each sorted by index.
pub fn non_dominated_sort<P: AsRef<[f64]>>(points: &[P]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dom_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (points[i].as_ref(), points[j].as_ref());
            if dominates(a, b) {
                dominated_by_me[i].push(j);
                dom_count[j] += 1;
            } else if dominates(b, a) {
                dominated_by_me[j].push(i);
                dom_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dom_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                dom_count[j] -= 1;
                if dom_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

fn objective_ranges<P: AsRef<[f64]>>(front: &[P]) -> Vec<(f64, f64)> {
    let m = front[0].as_ref().len();
    (0..m)
        .map(|i| {
            front.iter().map(|p| p.as_ref()[i]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        })
        .collect()
}

/// Nearest-neighbour crowding: for each member take its two closest front
/// members `a`, `b` (Euclidean, ties to the lower index) and return
/// `sqrt(sum_i ((f_i(a) - f_i(b)) / (f_i^min - f_i^max))^2)`. Objectives with
/// no spread contribute 0. Fronts of at most two members get `+inf`.
pub fn crowding_nearest<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let ranges = objective_ranges(front);
    let euclid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    (0..n)
        .map(|x| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&o| o != x)
                .map(|o| (euclid(front[x].as_ref(), front[o].as_ref()), o))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (fa, fb) = (front[others[0].1].as_ref(), front[others[1].1].as_ref());
            ranges
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| {
                    if hi > lo {
                        let r = (fa[i] - fb[i]) / (lo - hi);
                        r * r
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Classic NSGA-II crowding distance; boundary members get `+inf`.
pub fn crowding_standard<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut d = vec![0.0; n];
    for (i, &(lo, hi)) in objective_ranges(front).iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| front[a].as_ref()[i].total_cmp(&front[b].as_ref()[i]).then(a.cmp(&b)));
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..n - 1 {
                d[order[w]] += (front[order[w + 1]].as_ref()[i] - front[order[w - 1]].as_ref()[i]) / (hi - lo);
            }
        }
    }
    d
}

pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P], kind: CrowdingKind) -> Vec<f64> {
    match kind {
        CrowdingKind::Nearest => crowding_nearest(front),
        CrowdingKind::Standard => crowding_standard(front),
    }
}

/// Front membership and crowding for every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub fronts: Vec<Vec<usize>>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
}

pub fn rank_population<P: AsRef<[f64]>>(points: &[P], kind: CrowdingKind) -> Ranking {
    let fronts = non_dominated_sort(points);
    let mut rank = vec![0; points.len()];
    let mut crowding = vec![0.0; points.len()];
    for (h, front) in fronts.iter().enumerate() {
        let members: Vec<&[f64]> = front.iter().map(|&i| points[i].as_ref()).collect();
        for (&i, c) in front.iter().zip(crowding_distance(&members, kind)) {
            rank[i] = h;
            crowding[i] = c;
        }
    }
    Ranking { fronts, rank, crowding }
}

/// Indices of the `n` survivors: whole fronts while they fit, then the
/// straddling front by descending crowding (ties to the lower index).
pub fn environmental_selection(ranking: &Ranking, n: usize) -> Result<Vec<usize>> {
    let total = ranking.rank.len();
    if total < n {
        return Err(Error::Usage(format!("cannot select {n} survivors from {total} members")));
    }
    let mut out = Vec::with_capacity(n);
    for front in &ranking.fronts {
        if out.len() + front.len() <= n {
            out.extend_from_slice(front);
        } else {
            let mut rest = front.clone();
            rest.sort_by(|&a, &b| ranking.crowding[b].total_cmp(&ranking.crowding[a]).then(a.cmp(&b)));
            out.extend_from_slice(&rest[..n - out.len()]);
        }
        if out.len() == n {
            break;
        }
    }
    Ok(out)
}

/// Uniform crossover applied with probability `crossover_prob`; each
/// mutable locus is swapped with probability 0.5.
pub fn crossover<R: Rng + ?Sized>(a: &[f64], b: &[f64], mutable: &[bool], crossover_prob: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let (mut x, mut y) = (a.to_vec(), b.to_vec());
    if rng.random::<f64>() < crossover_prob {
        for j in 0..x.len() {
            let swap = rng.random::<f64>() < 0.5;
            if swap && mutable[j] {
                std::mem::swap(&mut x[j], &mut y[j]);
            }
        }
    }
    (x, y)
}

/// Per mutable gene with probability `mutation_prob`: Gaussian step clamped
/// to `[0,1]` for continuous genes, a different uniformly drawn category for
/// categorical genes.
pub fn mutate<R: Rng + ?Sized>(genes: &mut [f64], schema: &FeatureSchema, cfg: &GaConfig, rng: &mut R) {
    let step = Normal::new(0.0, cfg.mutation_sigma).expect("validated sigma");
    for (j, f) in schema.features.iter().enumerate() {
        let hit = rng.random::<f64>() < cfg.mutation_prob;
        if !hit || !f.mutable {
            continue;
        }
        if f.is_categorical() {
            genes[j] = other_category(genes[j] as usize, f.categories.len(), rng) as f64;
        } else {
            genes[j] = (genes[j] + step.sample(rng)).clamp(0.0, 1.0);
        }
    }
}

/// A category drawn uniformly from `0..k` excluding `current`.
pub fn other_category<R: Rng + ?Sized>(current: usize, k: usize, rng: &mut R) -> usize {
    if k < 2 {
        return current;
    }
    let draw = rng.random_range(0..k - 1);
    if draw >= current {
        draw + 1
    } else {
        draw
    }
}
