//! Implementations of the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use proce::causal::{fit_structural_model_with, CausalGraph, FitOptions, StructuralModel};
use proce::data::{gen_simple_bn, load_csv, save_csv, simple_bn_schema, Dataset, FeatureSchema, Instance, Normalizer, SimpleBnParams};
use proce::engine::{run_proce, ExplainRequest, ExplanationReport, ModelBundle, TOOL_VERSION};
use proce::eval::{evaluate_batch, paired_t_test, resolve_all, write_metrics_csv, ConstraintSpec, EvalItem, MetricsContext, PerSample};
use proce::models::{train_autoencoder, AutoencoderConfig, Classifier};
use proce::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::config::{echo, io_error, path_str, read_text, with_echo, write_text, RunConfig};
use crate::{Cli, Command, EvaluateArgs, ExplainArgs, FitScmArgs, GenArgs, TrainArgs};

/// Writes a line to stdout. A closed pipe (for example `| head`) is not an
/// error for a tool whose real output goes to files.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Metric names shared by every metrics document, in report order.
pub const METRICS: [&str; 6] = ["tcv", "ccv", "cat_prox", "con_prox", "im1", "im2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// All reports were written but some counterfactuals miss the target class.
    Invalid { invalid: usize, total: usize },
}

/// Effective configuration for `cli`: defaults, config file, then flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let seed_flag = match &cli.command {
        Command::GenSimpleBn(a) => {
            set(&mut cfg.n, a.n);
            if let Some(p) = &a.params {
                cfg.simple_bn = serde_json::from_str::<SimpleBnParams>(&read_text(p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            }
            a.seed
        }
        Command::Train(a) => {
            if a.label.is_some() {
                cfg.label = a.label.clone();
            }
            set(&mut cfg.preset, a.preset.map(Into::into));
            set(&mut cfg.embedding_dim, a.embedding_dim);
            set(&mut cfg.classifier_epochs, a.epochs);
            set(&mut cfg.autoencoder_epochs, a.ae_epochs);
            set(&mut cfg.split_ratio, a.split_ratio);
            set(&mut cfg.class_weight, a.class_weight.map(Into::into));
            a.seed
        }
        Command::FitScm(a) => {
            cfg.categorical_exogenous |= a.categorical_exogenous;
            None
        }
        Command::Explain(a) => {
            if a.target_class.is_some() {
                cfg.target_class = a.target_class;
            }
            set(&mut cfg.ga.generations, a.generations);
            set(&mut cfg.ga.population_size, a.population);
            set(&mut cfg.k, a.k_neighbors);
            set(&mut cfg.ga.crowding, a.crowding.map(Into::into));
            set(&mut cfg.ga.early_stop_patience, a.early_stop);
            set(&mut cfg.jobs, a.jobs);
            if a.no_causal_projection {
                cfg.ga.causal_projection = false;
            }
            cfg.record_runtime |= a.record_runtime;
            a.seed
        }
        Command::Evaluate(a) => {
            set(&mut cfg.tolerance, a.tolerance);
            set(&mut cfg.epsilon, a.epsilon);
            None
        }
    };
    cfg.resolve_seed(seed_flag)?;
    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        say!("{}", cfg.to_json_pretty());
        return Ok(Outcome::Done);
    }
    match &cli.command {
        Command::GenSimpleBn(a) => gen_simple_bn_cmd(a, &cfg),
        Command::Train(a) => train_cmd(a, &cfg),
        Command::FitScm(a) => fit_scm_cmd(a, &cfg),
        Command::Explain(a) => explain_cmd(a, &cfg),
        Command::Evaluate(a) => evaluate_cmd(a, &cfg),
    }
}

/// `<dir>/<stem><suffix>` for an output path `<dir>/<stem>.<ext>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstraintsDoc {
    constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<serde_json::Value>,
}

/// Reads either a bare JSON list of constraints or `{"constraints": [...]}`.
pub fn load_constraints(path: &Path) -> Result<Vec<ConstraintSpec>> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.is_array() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(serde_json::from_value::<ConstraintsDoc>(value)?.constraints)
    }
}

fn gen_simple_bn_cmd(a: &GenArgs, cfg: &RunConfig) -> Result<Outcome> {
    if cfg.n == 0 {
        return Err(Error::Usage("--n must be >= 1".into()));
    }
    let data = gen_simple_bn(&cfg.simple_bn, cfg.n, cfg.seed())?;
    let schema_path = sibling(&a.out, ".schema.json");
    let graph_path = sibling(&a.out, ".graph.json");
    let constraints_path = sibling(&a.out, ".constraints.json");
    let run_path = sibling(&a.out, ".run.json");
    let paths = BTreeMap::from([
        ("out", path_str(&a.out)),
        ("schema", path_str(&schema_path)),
        ("graph", path_str(&graph_path)),
        ("constraints", path_str(&constraints_path)),
    ]);
    let e = echo("gen-simple-bn", &paths, cfg);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|err| io_error(dir, err))?;
    }
    save_csv(&a.out, &data)?;
    write_text(&schema_path, &with_echo(&simple_bn_schema().to_json_pretty(), &e)?)?;
    write_text(&graph_path, &with_echo(&CausalGraph::simple_bn().to_json_pretty(), &e)?)?;
    let doc = ConstraintsDoc {
        constraints: ConstraintSpec::simple_bn(),
        run_config: Some(e.clone()),
    };
    write_text(&constraints_path, &serde_json::to_string_pretty(&doc)?)?;
    write_text(&run_path, &serde_json::to_string_pretty(&e)?)?;
    say!(
        "wrote {} rows to {} (class 1 share {:.3})",
        data.len(),
        a.out.display(),
        data.class_count(1) as f64 / data.len() as f64
    );
    Ok(Outcome::Done)
}

fn train_cmd(a: &TrainArgs, cfg: &RunConfig) -> Result<Outcome> {
    let mut schema = FeatureSchema::load(&a.schema)?;
    if let Some(label) = &cfg.label {
        schema = schema.with_label(label.clone())?;
    }
    let data = load_csv(&a.data, &schema).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!(
            "{msg}; {} expects columns [{}] plus label `{}`",
            a.schema.display(),
            schema.features.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", "),
            schema.label
        )),
        other => other,
    })?;
    let seed = cfg.seed();
    let split = data.split_indices(cfg.split_ratio, seed)?;
    let raw_train = data.subset(&split.train);
    let normalizer = Normalizer::fit(&raw_train)?;
    let train = raw_train.normalized(&normalizer)?;
    let test = data.subset(&split.test).normalized(&normalizer)?;

    let mut classifier = Classifier::new(cfg.preset, &schema, seed)?;
    classifier.train(&train, &cfg.classifier_training(), cfg.class_weight)?;

    let ae_cfg = AutoencoderConfig {
        embedding_dim: cfg.embedding_dim,
        category_width: cfg.category_width,
        hidden: cfg.autoencoder_hidden,
    };
    let ae_train = cfg.autoencoder_training();
    let class_ae = |class: u8, offset: u64| {
        let subset = train.class_subset(class);
        if subset.is_empty() {
            return Err(Error::Data(format!("training split has no rows of class {class}")));
        }
        let tc = proce::nn::TrainConfig {
            seed: seed.wrapping_add(offset),
            ..ae_train.clone()
        };
        Ok(train_autoencoder(&subset, &ae_cfg, &tc)?.0)
    };
    let (autoencoder, ae_report) = train_autoencoder(&train, &ae_cfg, &ae_train)?;
    let ae_class0 = class_ae(0, 1)?;
    let ae_class1 = class_ae(1, 2)?;

    let train_acc = classifier.accuracy(&train)?;
    let test_acc = if test.is_empty() { f64::NAN } else { classifier.accuracy(&test)? };
    let bundle = Bundle {
        dir: a.out.clone(),
        schema,
        normalizer,
        classifier,
        autoencoder,
        ae_class0,
        ae_class1,
        split,
        data,
    };
    let paths = BTreeMap::from([
        ("data", path_str(&a.data)),
        ("schema", path_str(&a.schema)),
        ("out", path_str(&a.out)),
    ]);
    bundle.save(&echo("train", &paths, cfg))?;
    say!("train accuracy: {train_acc:.4}");
    say!("test accuracy: {test_acc:.4}");
    say!("autoencoder final loss: {:.6}", ae_report.loss_history.last().copied().unwrap_or(f64::NAN));
    say!("bundle written to {}", a.out.display());
    Ok(Outcome::Done)
}

fn fit_scm_cmd(a: &FitScmArgs, cfg: &RunConfig) -> Result<Outcome> {
    let bundle = Bundle::load(&a.bundle)?;
    let data: Dataset = match &a.data {
        Some(p) => load_csv(p, &bundle.schema)?.normalized(&bundle.normalizer)?,
        None => bundle.train_set()?,
    };
    let graph = CausalGraph::load(&a.graph)?;
    let opts = FitOptions {
        categorical_exogenous: cfg.categorical_exogenous,
    };
    let model = fit_structural_model_with(&data, &graph, &opts)?;
    let mut paths = BTreeMap::from([
        ("bundle", path_str(&a.bundle)),
        ("graph", path_str(&a.graph)),
        ("out", path_str(&a.out)),
    ]);
    if let Some(p) = &a.data {
        paths.insert("data", path_str(p));
    }
    write_text(&a.out, &with_echo(&model.to_json_pretty(), &echo("fit-scm", &paths, cfg))?)?;
    for eq in model.equations() {
        say!(
            "{} <- [{}]: R^2 = {:.6}{}",
            eq.child,
            eq.parents.join(", "),
            eq.r_squared,
            if eq.ridge { " (ridge fallback)" } else { "" }
        );
    }
    say!("structural model written to {}", a.out.display());
    Ok(Outcome::Done)
}

/// One instance to explain: an output tag and the normalized values.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub tag: String,
    pub x: Instance,
}

/// Clamps continuous values into the normalized range. Rows outside the
/// training split's range normalize outside `[0,1]`.
fn clamp_to_unit(mut x: Instance, schema: &FeatureSchema, tag: &str) -> Instance {
    for (j, f) in schema.features.iter().enumerate() {
        if !f.is_categorical() && !(0.0..=1.0).contains(&x.0[j]) {
            log::warn!("{tag}: `{}` = {} lies outside the training range; clamped", f.name, x.0[j]);
            x.0[j] = x.0[j].clamp(0.0, 1.0);
        }
    }
    x
}

/// Expands `--instance` values against the normalized test split.
pub fn parse_instances(specs: &[String], test: &Dataset, normalizer: &Normalizer) -> Result<Vec<Target>> {
    let mut out = Vec::new();
    let mut inline = 0usize;
    for spec in specs {
        let s = spec.trim();
        if s.starts_with('[') || s.starts_with('{') {
            let raw = parse_inline(s, &test.schema)?;
            let tag = format!("inline{inline:03}");
            out.push(Target {
                x: clamp_to_unit(normalizer.normalize(&raw)?, &test.schema, &tag),
                tag,
            });
            inline += 1;
            continue;
        }
        let index = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("instance `{s}` is not a row index, range or JSON value")))
        };
        let (lo, hi) = match s.split_once('-') {
            Some((a, b)) => (index(a)?, index(b)?),
            None => (index(s)?, index(s)?),
        };
        if lo > hi || hi >= test.len() {
            return Err(Error::Usage(format!(
                "instance `{s}` is outside the {} test rows",
                test.len()
            )));
        }
        out.extend((lo..=hi).map(|i| {
            let tag = format!("row{i:06}");
            Target {
                x: clamp_to_unit(test.rows[i].clone(), &test.schema, &tag),
                tag,
            }
        }));
    }
    Ok(out)
}

/// Raw-scale instance from a JSON array in feature order or an object keyed
/// by feature name. Categoricals may be given by name or index.
fn parse_inline(text: &str, schema: &FeatureSchema) -> Result<Instance> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("inline instance is not valid JSON: {e}")))?;
    let cells: Vec<serde_json::Value> = match value {
        serde_json::Value::Array(items) => {
            if items.len() != schema.len() {
                return Err(Error::Usage(format!(
                    "inline instance has {} values, schema has {} features",
                    items.len(),
                    schema.len()
                )));
            }
            items
        }
        serde_json::Value::Object(mut map) => {
            let cells = schema
                .features
                .iter()
                .map(|f| {
                    map.remove(&f.name)
                        .ok_or_else(|| Error::Usage(format!("inline instance lacks feature `{}`", f.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(extra) = map.keys().next() {
                return Err(Error::Usage(format!("inline instance has unknown feature `{extra}`")));
            }
            cells
        }
        _ => return Err(Error::Usage("inline instance must be a JSON array or object".into())),
    };
    let values = schema
        .features
        .iter()
        .zip(&cells)
        .map(|(f, cell)| {
            let bad = || Error::Usage(format!("invalid value {cell} for feature `{}`", f.name));
            if f.is_categorical() {
                match cell {
                    serde_json::Value::String(name) => f.category_index(name).map(|i| i as f64).ok_or_else(bad),
                    serde_json::Value::Number(n) => n
                        .as_u64()
                        .filter(|&i| (i as usize) < f.categories.len())
                        .map(|i| i as f64)
                        .ok_or_else(bad),
                    _ => Err(bad()),
                }
            } else {
                cell.as_f64().filter(|v| v.is_finite()).ok_or_else(bad)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance::new(values))
}

fn explain_cmd(a: &ExplainArgs, cfg: &RunConfig) -> Result<Outcome> {
    let bundle = Bundle::load(&a.bundle)?;
    let model = StructuralModel::load(&a.scm)?;
    let reference = bundle.train_set()?;
    let test = bundle.test_set()?;
    let targets = parse_instances(&a.instance, &test, &bundle.normalizer)?;
    let single_file = targets.len() == 1 && a.out.extension().is_some_and(|e| e == "json");
    let models = ModelBundle {
        classifier: &bundle.classifier,
        ae: &bundle.autoencoder,
        model: &model,
        data: &reference,
    };
    models.check()?;

    let mut requests = Vec::with_capacity(targets.len());
    for (pos, t) in targets.iter().enumerate() {
        let y_org = bundle.classifier.predict(&t.x)?;
        let y_cf = cfg.target_class.unwrap_or(1 - y_org);
        if y_cf == y_org {
            return Err(Error::Usage(format!(
                "instance {} is already predicted as target class {y_cf}",
                t.tag
            )));
        }
        let mut ga = cfg.ga.clone();
        ga.seed = cfg.seed().wrapping_add(pos as u64);
        requests.push(ExplainRequest {
            x_org: t.x.clone(),
            y_org,
            y_cf,
            ga,
            k: cfg.k,
        });
    }

    let paths = BTreeMap::from([
        ("bundle", path_str(&a.bundle)),
        ("scm", path_str(&a.scm)),
        ("out", path_str(&a.out)),
    ]);
    let base_echo = echo("explain", &paths, cfg);
    let explain_one = |(t, req): (&Target, &ExplainRequest)| -> Result<ExplanationReport> {
        let start = Instant::now();
        let mut report = run_proce(req, &models)?;
        let elapsed = start.elapsed().as_secs_f64();
        let mut e = base_echo.clone();
        e["instance"] = serde_json::Value::String(t.tag.clone());
        e["search"] = report.config_echo.clone();
        report.config_echo = e;
        if cfg.record_runtime {
            report.runtime_seconds = Some(elapsed);
        }
        Ok(report)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let reports: Vec<ExplanationReport> =
        pool.install(|| targets.par_iter().zip(&requests).map(explain_one).collect::<Result<Vec<_>>>())?;

    let mut invalid = 0usize;
    for (t, r) in targets.iter().zip(&reports) {
        let path = if single_file {
            a.out.clone()
        } else {
            a.out.join(format!("report_{}.json", t.tag))
        };
        write_text(&path, &r.to_json_pretty())?;
        invalid += usize::from(!r.valid);
        say!(
            "{}: class {} -> {} valid={} p(y=1)={:.4} -> {}",
            t.tag,
            r.y_org,
            r.y_cf,
            r.valid,
            r.probability,
            path.display()
        );
    }
    if invalid > 0 {
        Ok(Outcome::Invalid {
            invalid,
            total: reports.len(),
        })
    } else {
        Ok(Outcome::Done)
    }
}

/// JSON twin of the metrics CSV; also the input format of `--compare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub tool_version: String,
    pub metrics: proce::eval::MetricsReport,
    pub per_sample: PerSample,
    pub reports: Vec<String>,
    pub run_config: serde_json::Value,
}

/// Report files of `dir` in file-name order.
pub fn report_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no report files in {}", dir.display())));
    }
    Ok(files)
}

fn evaluate_cmd(a: &EvaluateArgs, cfg: &RunConfig) -> Result<Outcome> {
    let bundle = Bundle::load(&a.bundle)?;
    let files = report_files(&a.reports)?;
    let mut items = Vec::with_capacity(files.len());
    let mut runtimes = Vec::new();
    for f in &files {
        let r = ExplanationReport::from_json(&read_text(f)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", f.display())))?;
        for x in [&r.x_org, &r.x_cf] {
            x.validate(&bundle.schema, true)?;
        }
        runtimes.extend(r.runtime_seconds);
        items.push(EvalItem {
            x_org: r.x_org,
            x_cf: r.x_cf,
            y_org: r.y_org,
            y_cf: r.y_cf,
        });
    }
    let specs = match &a.constraints {
        Some(p) => load_constraints(p)?,
        None => ConstraintSpec::from_schema(&bundle.schema),
    };
    let constraints = resolve_all(&specs, &bundle.schema)?;
    let triple = bundle.triple();
    let ctx = MetricsContext {
        schema: &bundle.schema,
        classifier: &bundle.classifier,
        autoencoders: &triple,
        constraints: &constraints,
        tol: cfg.tolerance,
        epsilon: cfg.epsilon,
    };
    let (mut metrics, per_sample) = evaluate_batch(&ctx, &items, &a.method, &a.dataset)?;
    if !runtimes.is_empty() && runtimes.len() == items.len() {
        metrics.runtime_seconds = Some(runtimes.iter().sum::<f64>() / runtimes.len() as f64);
    }

    let mut paths = BTreeMap::from([
        ("reports", path_str(&a.reports)),
        ("bundle", path_str(&a.bundle)),
        ("out", path_str(&a.out)),
    ]);
    if let Some(p) = &a.constraints {
        paths.insert("constraints", path_str(p));
    }
    if let Some(p) = &a.compare {
        paths.insert("compare", path_str(p));
    }
    let e = echo("evaluate", &paths, cfg);

    let mut csv_bytes = Vec::new();
    write_metrics_csv(&mut csv_bytes, std::slice::from_ref(&metrics))?;
    write_text(&a.out, &String::from_utf8(csv_bytes).expect("csv is utf-8"))?;
    let doc = MetricsDoc {
        tool_version: TOOL_VERSION.to_string(),
        metrics: metrics.clone(),
        per_sample: per_sample.clone(),
        reports: files
            .iter()
            .map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        run_config: e.clone(),
    };
    let json_path = a.out.with_extension("json");
    write_text(&json_path, &serde_json::to_string_pretty(&doc)?)?;
    say!(
        "n={} tcv={:.4} ccv={:.4} cat_prox={:.4} con_prox={:.6} im1={:.6} im2={:.6}",
        metrics.n, metrics.tcv, metrics.ccv, metrics.cat_prox, metrics.con_prox, metrics.im1, metrics.im2
    );

    if let Some(other_path) = &a.compare {
        let other: MetricsDoc = serde_json::from_str(&read_text(other_path)?)?;
        let mut tests = serde_json::Map::new();
        for name in METRICS {
            let t = paired_t_test(per_sample.metric(name)?, other.per_sample.metric(name)?)?;
            say!(
                "{name}: mean diff {:+.6}, t = {:.4}, df = {}, p = {:.4}",
                t.mean_diff, t.t, t.df, t.p
            );
            tests.insert(name.to_string(), serde_json::to_value(t)?);
        }
        let out = serde_json::json!({
            "tool_version": TOOL_VERSION,
            "method": metrics.method,
            "baseline": other.metrics.method,
            "tests": tests,
            "run_config": e,
        });
        write_text(&sibling(&a.out, ".ttest.json"), &serde_json::to_string_pretty(&out)?)?;
    }
    say!("metrics written to {} and {}", a.out.display(), json_path.display());
    Ok(Outcome::Done)
}
