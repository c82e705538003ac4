//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{
    continuous_schema, decomposition_oracle, mixed_scm_fixture, mixed_scm_instance, numeric_gradient, peel, random_net,
    random_scm, scaled_autoencoder, t_two_sided_oracle,
};
use proce::causal::fit_structural_model;
use proce::data::Instance;
use proce::eval::{continuous_proximity, im1, paired_t_test, target_class_validity};
use proce::models::{Classifier, Preset};
use proce::moo::{crowding_nearest, non_dominated_sort};
use proce::nn::{backprop_gradients, relative_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SORT_TIME_LIMIT: Duration = Duration::from_secs(5);
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(30);
const OLS_TOLERANCE: f64 = 1e-8;
const OLS_TIME_LIMIT: Duration = Duration::from_secs(10);
const CROWDING_TOLERANCE: f64 = 1e-12;
const TCV_MIN: f64 = 0.90;
const RUNTIME_MAX_SECONDS: f64 = 10.0;
const CCV_MIN: f64 = 0.70;
const DECOMPOSITION_TOLERANCE: f64 = 1e-12;
const P_TOLERANCE: f64 = 1e-4;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sorting_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let n = rng.random_range(1..=50usize);
        // Half the populations use a coarse grid so ties and duplicates occur.
        let coarse = case % 2 == 0;
        let points: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                std::array::from_fn(|_| {
                    if coarse {
                        f64::from(rng.random_range(0..4u8))
                    } else {
                        rng.random::<f64>()
                    }
                })
            })
            .collect();
        let fronts: Vec<Vec<usize>> = non_dominated_sort(&points)
            .into_iter()
            .map(|mut f| {
                f.sort_unstable();
                f
            })
            .collect();
        ensure(fronts == peel(&points), format!("population {case} differs from peeling"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < SORT_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("200 populations match, {elapsed:.2?}"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (net, x, target, loss) = random_net(&mut rng);
        let analytic: Vec<f64> = backprop_gradients(&net, &x, &target, loss)
            .map_err(|e| e.to_string())?
            .buffers()
            .concat();
        let numeric = numeric_gradient(&net, &x, &target, loss, 1e-4);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < GRAD_TOLERANCE, format!("worst relative error {worst:e}"))?;
    ensure(elapsed < GRAD_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("worst relative error {worst:.2e} over 100 nets, {elapsed:.2?}"))
}

fn scm_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let scm = random_scm(&mut rng, 40);
        let model = fit_structural_model(&scm.data, &scm.graph).map_err(|e| e.to_string())?;
        for truth in &scm.truth {
            let got = model
                .equations()
                .iter()
                .find(|e| e.child == truth.child)
                .ok_or(format!("no equation for {}", truth.child))?;
            ensure(got.parents == truth.parents, "parent order differs")?;
            for (a, b) in got.coefficients.iter().zip(&truth.coefficients) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((got.intercept - truth.intercept).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < OLS_TOLERANCE, format!("worst coefficient error {worst:e}"))?;
    ensure(elapsed < OLS_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("worst coefficient error {worst:.2e} over 100 DAGs, {elapsed:.2?}"))
}

fn crowding_example() -> Outcome {
    let front = [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]];
    let d = crowding_nearest(&front)[1];
    ensure((d - std::f64::consts::SQRT_2).abs() < CROWDING_TOLERANCE, format!("d(B) = {d}"))?;
    Ok(format!("d(B) = {d}"))
}

fn metric_identities() -> Outcome {
    let schema = continuous_schema(4);
    let perfect = scaled_autoencoder(&schema, 1.0);
    let lossy = scaled_autoencoder(&schema, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random_instance = |rng: &mut ChaCha8Rng| Instance::new((0..4).map(|_| rng.random_range(0.05..1.0)).collect());
    for _ in 0..50 {
        let x = random_instance(&mut rng);
        let v = im1(&perfect, &lossy, &x, 1e-8).map_err(|e| e.to_string())?;
        ensure(v == 0.0, format!("IM1 {v} under perfect reconstruction"))?;
    }

    for _ in 0..50 {
        let a = random_instance(&mut rng);
        let b = random_instance(&mut rng);
        let same = continuous_proximity(&schema, &[(a.clone(), a.clone())]).map_err(|e| e.to_string())?;
        ensure(same == 0.0, "identical pair has nonzero proximity")?;
        let diff = continuous_proximity(&schema, &[(a.clone(), b.clone())]).map_err(|e| e.to_string())?;
        ensure((diff < 0.0) == (a != b), "distinct pair has zero proximity")?;
    }

    // Validity arithmetic: desired classes chosen so exactly `hits` agree
    // with the classifier.
    let classifier = Classifier::new(Preset::Net3, &schema, 3).map_err(|e| e.to_string())?;
    for (n, hits) in [(1usize, 0usize), (1, 1), (7, 3), (10, 10), (13, 5)] {
        let xs: Vec<Instance> = (0..n).map(|_| random_instance(&mut rng)).collect();
        let ys: Vec<u8> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let y = classifier.predict(x).unwrap();
                if i < hits {
                    y
                } else {
                    1 - y
                }
            })
            .collect();
        let tcv = target_class_validity(&xs, &ys, &classifier).map_err(|e| e.to_string())?;
        ensure(tcv == hits as f64 / n as f64, format!("tcv {tcv} for {hits}/{n}"))?;
    }
    Ok("IM1 = 0, proximity zero iff identical, tcv exact".into())
}

fn decomposition() -> Outcome {
    let (schema, model, ae) = mixed_scm_fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (x_cf, x_org) = (mixed_scm_instance(&mut rng), mixed_scm_instance(&mut rng));
        let oracle = decomposition_oracle(&schema, &model, &ae, &x_cf, &x_org);
        let got = model.final_distance(&ae, &schema, &x_cf, &x_org).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs());
    }
    ensure(worst < DECOMPOSITION_TOLERANCE, format!("worst deviation {worst:e}"))?;
    Ok(format!("worst deviation {worst:.2e} over 100 pairs"))
}

fn t_test_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(3..40);
        let shift = rng.random_range(-1.0..1.0);
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + shift * 0.3 + rng.random_range(-0.5..0.5)).collect();
        let r = paired_t_test(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((r.p - t_two_sided_oracle(r.t, n as f64 - 1.0)).abs());
    }
    ensure(worst < P_TOLERANCE, format!("worst p deviation {worst:e}"))?;
    Ok(format!("worst p deviation {worst:.2e} over 100 samples"))
}

/// Runs the binary in `dir` with relative paths only, so two runs in
/// different directories write identical provenance.
fn proce(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_proce"))
        .current_dir(dir)
        .args(args)
        .env_remove("PROCE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`proce {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

const INSTANCES: usize = 50;

/// Simple-BN pipeline at the reference scale. Returns the mean wall time per
/// explained instance of the single-threaded explain step.
fn pipeline(dir: &Path) -> Result<f64, String> {
    proce(dir, &["gen-simple-bn", "--n", "2000", "--seed", "7", "--out", "sbn.csv"])?;
    proce(
        dir,
        &["train", "--data", "sbn.csv", "--schema", "sbn.schema.json", "--preset", "net3", "--seed", "7", "--out", "bundle"],
    )?;
    proce(dir, &["fit-scm", "--bundle", "bundle", "--graph", "sbn.graph.json", "--out", "scm.json"])?;
    let range = format!("0-{}", INSTANCES - 1);
    let start = Instant::now();
    proce(
        dir,
        &[
            "explain", "--bundle", "bundle", "--scm", "scm.json", "--instance", &range, "--population", "100",
            "--generations", "100", "--k-neighbors", "25", "--seed", "7", "--jobs", "1", "--out", "reports",
        ],
    )?;
    let per_instance = start.elapsed().as_secs_f64() / INSTANCES as f64;
    proce(
        dir,
        &[
            "evaluate", "--reports", "reports", "--bundle", "bundle", "--constraints", "sbn.constraints.json",
            "--method", "proce", "--dataset", "simple-bn", "--out", "metrics.csv",
        ],
    )?;
    Ok(per_instance)
}

fn metric(dir: &Path, name: &str) -> Result<f64, String> {
    let text = std::fs::read_to_string(dir.join("metrics.json")).map_err(|e| e.to_string())?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    doc["metrics"][name].as_f64().ok_or(format!("metric {name} missing"))
}

fn end_to_end(dir: &Path, per_instance: f64) -> Outcome {
    let tcv = metric(dir, "tcv")?;
    ensure(tcv >= TCV_MIN, format!("tcv {tcv:.3} below {TCV_MIN}"))?;
    ensure(
        per_instance <= RUNTIME_MAX_SECONDS,
        format!("{per_instance:.2} s per instance"),
    )?;
    Ok(format!("tcv {tcv:.3} on {INSTANCES} instances, {per_instance:.2} s per instance"))
}

fn constraint_validity(dir: &Path) -> Outcome {
    let ccv = metric(dir, "ccv")?;
    ensure(ccv >= CCV_MIN, format!("ccv {ccv:.3} below {CCV_MIN}"))?;
    Ok(format!("ccv {ccv:.3}"))
}

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (files_under(a), files_under(b));
    ensure(fa == fb, "the runs wrote different file sets")?;
    for rel in &fa {
        let (x, y) = (std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap());
        ensure(x == y, format!("{} differs", rel.display()))?;
    }
    let reports = fa.iter().filter(|p| p.starts_with("reports")).count();
    Ok(format!("{} files identical, {reports} reports", fa.len()))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("criterion {id:>2} PASS {name}: {detail}"),
        Err(detail) => {
            failures += 1;
            println!("criterion {id:>2} FAIL {name}: {detail}");
        }
    };

    report(1, "non-dominated sorting oracle", sorting_oracle());
    report(2, "gradient check", gradient_check());
    report(3, "structural equation recovery", scm_recovery());
    report(4, "nearest-neighbour crowding example", crowding_example());

    let first = tempfile::tempdir().expect("temp dir");
    let second = tempfile::tempdir().expect("temp dir");
    match pipeline(first.path()) {
        Ok(per_instance) => {
            report(5, "simple-bn validity and runtime", end_to_end(first.path(), per_instance));
            report(6, "simple-bn causal-constraint validity", constraint_validity(first.path()));
        }
        Err(e) => {
            report(5, "simple-bn validity and runtime", Err(e.clone()));
            report(6, "simple-bn causal-constraint validity", Err(e));
        }
    }
    report(7, "metric identities", metric_identities());
    let repeat = pipeline(second.path()).and_then(|_| determinism(first.path(), second.path()));
    report(8, "pipeline determinism", repeat);
    report(9, "final distance decomposition", decomposition());
    report(10, "paired t-test oracle", t_test_oracle());

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
