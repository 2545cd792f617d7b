use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use deepcollide_core::dataset::{self, DatasetFormat, DatasetMetadata, LabeledDataset};
use deepcollide_core::deepcollide::{
    self, Checkpoint, FoldedNetwork, ModelConfig, PositionalEncodingSpec, TrainingConfig,
};
use deepcollide_core::evalbench::{
    deepcollide_default, deepcollide_preset, dummy_baselines, evaluate, fastron_default,
    fastron_preset, pareto_frontier, run_sweep, ModelSpec, Precision, SweepAxis, SweepProtocol,
    SweepSpec, TrainedModel, JOINTS_PER_ROBOT, MIN_REPEATS,
};
use deepcollide_core::fastron::{fastron_train, FastronConfig, FastronFile, FastronModel, FastronPredictor};
use deepcollide_core::geometry::{
    generate_environment, measure_collision_density, CollisionLabel, Environment, Obstacle,
    Placement,
};
use deepcollide_core::rng::derive_seed;
use deepcollide_core::TOOL_VERSION;

use crate::config::{check_flag, load_section, resolve, usage};
use crate::{Cli, Command};

struct Run {
    command: &'static str,
    deterministic: bool,
}

impl Run {
    /// Provenance block embedded in every artifact.
    fn info(&self, seed: Option<u64>, precision: Precision, config: &impl Serialize) -> Value {
        json!({
            "tool_version": TOOL_VERSION,
            "command": self.command,
            "seed": seed,
            "precision": precision,
            "deterministic": self.deterministic,
            "config": config,
        })
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    if cli.deterministic {
        std::env::set_var("RAYON_NUM_THREADS", "1");
    }
    let command = cli.command.name();
    let section = cli
        .config
        .as_deref()
        .map(|p| load_section(p, command))
        .transpose()?;
    let run = Run {
        command,
        deterministic: cli.deterministic,
    };
    match &cli.command {
        Command::GenEnv(a) => gen_env(&run, resolve(a, section)?),
        Command::Sample(a) => sample(&run, resolve(a, section)?),
        Command::Train(a) => train(&run, resolve(a, section)?),
        Command::Eval(a) => eval(&run, resolve(a, section)?),
        Command::Predict(a) => predict(&run, resolve(a, section)?),
        Command::Sweep(a) => sweep(&run, resolve(a, section)?),
        Command::Pareto(a) => pareto(&run, resolve(a, section)?),
    }
}

fn require_path<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let path = path.as_deref().ok_or_else(|| usage(format!("{flag} is required")))?;
    if !path.is_file() {
        return Err(usage(format!("{flag} {}: no such file", path.display())));
    }
    Ok(path)
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_env(path: &Option<PathBuf>) -> Result<Environment> {
    let path = require_path(path, "--env")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Environment::from_json(&text).with_context(|| format!("parsing environment {}", path.display()))
}

fn load_data(path: &Option<PathBuf>, env: &Environment) -> Result<LabeledDataset> {
    let path = require_path(path, "--data")?;
    let env_ref = env.reference();
    let meta_path = sidecar(path);
    if meta_path.is_file() {
        let meta: DatasetMetadata = serde_json::from_str(&fs::read_to_string(&meta_path)?)
            .with_context(|| format!("parsing {}", meta_path.display()))?;
        if meta.env_ref != env_ref {
            return Err(usage(format!(
                "{} was sampled from environment {} but --env is {env_ref}",
                path.display(),
                meta.env_ref
            )));
        }
    }
    let data = dataset::load(path, env_ref).with_context(|| format!("reading {}", path.display()))?;
    if data.dof() != env.dof() {
        return Err(deepcollide_core::Error::DimensionMismatch {
            context: "dataset vs environment DoF",
            expected: env.dof(),
            got: data.dof(),
        }
        .into());
    }
    Ok(data)
}

// ---------------------------------------------------------------- gen-env

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenEnvConfig {
    robots: usize,
    obstacles: usize,
    seed: u64,
    placement: Placement,
    density_samples: usize,
    out: PathBuf,
}

impl Default for GenEnvConfig {
    fn default() -> Self {
        Self {
            robots: 2,
            obstacles: 25,
            seed: 0,
            placement: Placement::Far,
            density_samples: 10_000,
            out: PathBuf::from("env.json"),
        }
    }
}

fn gen_env(run: &Run, c: GenEnvConfig) -> Result<ExitCode> {
    check_flag(c.robots >= 1, "--robots", "must be at least 1")?;
    check_flag(c.density_samples >= 1, "--density-samples", "must be at least 1")?;
    let env = generate_environment(c.robots, c.obstacles, c.seed, c.placement)?;
    let mut text = env.to_json()?;
    text.push('\n');
    write_file(&c.out, text.as_bytes())?;

    let density =
        measure_collision_density(&env, c.density_samples, derive_seed(c.seed, "cli/density", 0))?;
    let boxes = env
        .obstacles
        .iter()
        .filter(|o| matches!(o, Obstacle::Box { .. }))
        .count();
    let meta = json!({
        "env_ref": env.reference(),
        "dof": env.dof(),
        "boxes": boxes,
        "spheres": env.obstacles.len() - boxes,
        "density_estimate": density,
        "run": run.info(Some(c.seed), Precision::F64, &c),
    });
    write_json(&sidecar(&c.out), &meta)?;
    println!(
        "wrote {} ({} DoF, {} boxes, {} spheres, collision density {:.3})",
        c.out.display(),
        env.dof(),
        boxes,
        env.obstacles.len() - boxes,
        density
    );
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- sample

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleConfig {
    env: Option<PathBuf>,
    n_train: usize,
    n_test: usize,
    seed: u64,
    format: DatasetFormat,
    features: bool,
    out_dir: PathBuf,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            env: None,
            n_train: 30_000,
            n_test: 5_000,
            seed: 0,
            format: DatasetFormat::Csv,
            features: false,
            out_dir: PathBuf::from("."),
        }
    }
}

fn sample(run: &Run, c: SampleConfig) -> Result<ExitCode> {
    let env = read_env(&c.env)?;
    check_flag(c.n_train >= 1, "--n-train", "must be at least 1")?;
    check_flag(c.n_test >= 1, "--n-test", "must be at least 1")?;
    fs::create_dir_all(&c.out_dir)?;
    let ext = match c.format {
        DatasetFormat::Csv => "csv",
        DatasetFormat::Binary => "bin",
    };
    let info = run.info(Some(c.seed), Precision::F64, &c);
    for (name, n) in [("train", c.n_train), ("test", c.n_test)] {
        let data = dataset::sample_dataset(&env, n, derive_seed(c.seed, &format!("cli/{name}"), 0))?;
        let path = c.out_dir.join(format!("{name}.{ext}"));
        dataset::save(&data, &path, c.format)?;
        let mut meta = DatasetMetadata::describe(&data, c.seed);
        meta.config = info.clone();
        write_json(&sidecar(&path), &meta)?;
        if c.features {
            let fpath = c.out_dir.join(format!("{name}.features.csv"));
            let file = io::BufWriter::new(fs::File::create(&fpath)?);
            dataset::write_features_csv(data.fk_features(&env)?, file)?;
        }
        println!(
            "wrote {} ({n} rows, collision fraction {:.3})",
            path.display(),
            meta.density_estimate
        );
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainConfig {
    env: Option<PathBuf>,
    data: Option<PathBuf>,
    model: String,
    frequencies: usize,
    beta: Option<f64>,
    sigma: f64,
    hidden: usize,
    epochs: usize,
    batch_size: usize,
    lr_max: f64,
    lr_min: f64,
    patience: usize,
    train_fraction: f64,
    gamma: f64,
    imax: usize,
    smax: usize,
    seed: u64,
    out: PathBuf,
    report: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let ModelSpec::Fastron {
            gamma,
            max_updates,
            max_support,
            ..
        } = fastron_default()
        else {
            unreachable!()
        };
        Self {
            env: None,
            data: None,
            model: "deepcollide".into(),
            frequencies: 12,
            beta: None,
            sigma: 1.0,
            hidden: ModelConfig::DEFAULT_HIDDEN,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_max: t.lr_max,
            lr_min: t.lr_min,
            patience: t.early_stop_patience,
            train_fraction: t.train_fraction,
            gamma,
            imax: max_updates,
            smax: max_support,
            seed: 0,
            out: PathBuf::from("model.json"),
            report: None,
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn train(run: &Run, mut c: TrainConfig) -> Result<ExitCode> {
    let env = read_env(&c.env)?;
    let data = load_data(&c.data, &env)?;
    let started = Instant::now();
    let (model_value, report) = match c.model.as_str() {
        "deepcollide" => {
            let beta = *c.beta.get_or_insert(1.0);
            check_flag(c.frequencies >= 1, "--L", "must be at least 1")?;
            check_flag(positive(c.sigma), "--sigma", "must be positive")?;
            check_flag(positive(beta), "--beta", "must be positive")?;
            check_flag(c.hidden >= 1, "--hidden", "must be at least 1")?;
            check_flag(c.epochs >= 1, "--epochs", "must be at least 1")?;
            check_flag(c.batch_size >= 2, "--batch-size", "must be at least 2")?;
            check_flag(positive(c.lr_max), "--lr-max", "must be positive")?;
            check_flag(positive(c.lr_min) && c.lr_min <= c.lr_max, "--lr-min", "must be positive and at most --lr-max")?;
            check_flag(c.patience >= 1, "--patience", "must be at least 1")?;
            check_flag(
                c.train_fraction > 0.0 && c.train_fraction < 1.0,
                "--train-fraction",
                "must lie strictly between 0 and 1",
            )?;
            check_flag(
                data.len() >= deepcollide::MIN_TRAINING_ROWS,
                "--data",
                &format!("needs at least {} rows to train DeepCollide", deepcollide::MIN_TRAINING_ROWS),
            )?;
            let encoding = PositionalEncodingSpec::new(c.frequencies, c.sigma)?;
            let config = ModelConfig::new(encoding, env.feature_dim(), c.hidden);
            let training = TrainingConfig {
                epochs: c.epochs,
                batch_size: c.batch_size,
                lr_max: c.lr_max,
                lr_min: c.lr_min,
                beta,
                early_stop_patience: c.patience,
                train_fraction: c.train_fraction,
                seed: c.seed,
                ..TrainingConfig::default()
            };
            let (model, report) = deepcollide::train(&data, &env, &config, &training)?;
            println!(
                "trained deepcollide: best validation accuracy {:.4} at epoch {}",
                report.best_validation_accuracy, report.best_epoch
            );
            let ckpt = Checkpoint::from_model(
                &model,
                Some(&training),
                env.reference(),
                Some(data.content_reference()),
            );
            (serde_json::to_value(&ckpt)?, serde_json::to_value(&report)?)
        }
        "fastron" => {
            let beta = *c.beta.get_or_insert(500.0);
            check_flag(positive(c.gamma), "--gamma", "must be positive")?;
            check_flag(beta >= 1.0 && beta.is_finite(), "--beta", "must be at least 1")?;
            check_flag(c.imax >= 1, "--imax", "must be at least 1")?;
            check_flag(c.smax >= 1, "--smax", "must be at least 1")?;
            let config = FastronConfig::new(c.gamma, beta, c.imax, c.smax)?;
            let model = fastron_train(data.fk_features(&env)?.view(), data.labels(), &config)?;
            let report = model.report().cloned().expect("trained model has a report");
            println!(
                "trained fastron: {} after {} updates, {} support points",
                report.termination, report.updates, report.support_count
            );
            (
                serde_json::to_value(model.to_file(Some(env.reference())))?,
                serde_json::to_value(&report)?,
            )
        }
        other => {
            return Err(usage(format!("--model must be deepcollide or fastron, got `{other}`")));
        }
    };
    let train_seconds = started.elapsed().as_secs_f64();

    let info = run.info(Some(c.seed), Precision::F64, &c);
    let Value::Object(mut file) = model_value else {
        unreachable!("models serialize to objects")
    };
    file.insert("run".into(), info.clone());
    let bytes = serde_json::to_vec(&Value::Object(file))?;
    write_file(&c.out, &bytes)?;
    let digest = hex::encode(Sha256::digest(&bytes));

    let report_path = c
        .report
        .clone()
        .unwrap_or_else(|| c.out.with_extension("report.json"));
    write_json(
        &report_path,
        &json!({
            "model": c.model,
            "model_file": c.out,
            "model_sha256": digest,
            "train_seconds": train_seconds,
            "report": report,
            "run": info,
        }),
    )?;
    println!("wrote {} (sha256 {digest})", c.out.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- model files

struct LoadedModel {
    model: TrainedModel,
    env_ref: Option<String>,
}

fn load_model(path: &Option<PathBuf>) -> Result<LoadedModel> {
    let path = require_path(path, "--model")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{} is not a model file: {e}", path.display())))?;
    let tag = value.get("model").and_then(Value::as_str).unwrap_or_default().to_string();
    let bad = |e: serde_json::Error| usage(format!("{} is not a valid {tag} model: {e}", path.display()));
    match tag.as_str() {
        "deepcollide" => {
            let ckpt: Checkpoint = serde_json::from_value(value).map_err(bad)?;
            let model = ckpt.to_model()?;
            if !model.is_trained() {
                return Err(usage(format!("{} holds an untrained model", path.display())));
            }
            Ok(LoadedModel {
                model: TrainedModel::DeepCollide(model, None),
                env_ref: Some(ckpt.env_ref),
            })
        }
        "fastron" => {
            let file: FastronFile = serde_json::from_value(value).map_err(bad)?;
            let env_ref = file.env_ref.clone();
            Ok(LoadedModel {
                model: TrainedModel::Fastron(FastronModel::from_file(file)?),
                env_ref,
            })
        }
        other => Err(usage(format!(
            "{}: unknown model kind `{other}`",
            path.display()
        ))),
    }
}

fn check_model_env(loaded: &LoadedModel, env: &Environment) -> Result<()> {
    match &loaded.env_ref {
        Some(r) if *r != env.reference() => Err(usage(format!(
            "model was trained on environment {r} but --env is {}",
            env.reference()
        ))),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalConfig {
    env: Option<PathBuf>,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    warmup: usize,
    repeats: usize,
    precision: Precision,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            env: None,
            model: None,
            data: None,
            warmup: deepcollide_core::evalbench::DEFAULT_WARMUP,
            repeats: deepcollide_core::evalbench::DEFAULT_REPEATS,
            precision: Precision::F64,
            out: None,
            csv: None,
        }
    }
}

fn eval(run: &Run, c: EvalConfig) -> Result<ExitCode> {
    check_flag(c.repeats >= MIN_REPEATS, "--repeats", &format!("must be at least {MIN_REPEATS}"))?;
    let env = read_env(&c.env)?;
    let loaded = load_model(&c.model)?;
    check_model_env(&loaded, &env)?;
    let data = load_data(&c.data, &env)?;
    let features = data.fk_features(&env)?;
    let result = evaluate(&loaded.model, features, data.labels(), c.warmup, c.repeats, c.precision)?;
    let baselines = dummy_baselines(data.labels())?;
    let out = json!({
        "model": loaded.model.name(),
        "n": data.len(),
        "counts": result.counts,
        "metrics": result.metrics,
        "timing": result.timing,
        "baselines": baselines,
        "run": run.info(None, c.precision, &c),
    });
    match &c.out {
        Some(path) => write_json(path, &out)?,
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    if let Some(path) = &c.csv {
        create_parent(path)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "model", "n", "tp", "tn", "fp", "fn", "accuracy", "tpr", "tnr", "infer_s_mean",
            "infer_s_std", "infer_s_median", "majority_accuracy", "precision",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let k = &result.counts;
        w.write_record([
            loaded.model.name().to_string(),
            data.len().to_string(),
            k.tp.to_string(),
            k.tn.to_string(),
            k.fp.to_string(),
            k.fn_.to_string(),
            opt(result.metrics.accuracy),
            opt(result.metrics.tpr),
            opt(result.metrics.tnr),
            result.timing.per_inference_mean.to_string(),
            result.timing.per_inference_std.to_string(),
            result.timing.per_inference_median.to_string(),
            baselines.majority_accuracy.to_string(),
            c.precision.to_string(),
        ])?;
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PredictConfig {
    env: Option<PathBuf>,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    precision: Precision,
    out: Option<PathBuf>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            env: None,
            model: None,
            data: None,
            precision: Precision::F64,
            out: None,
        }
    }
}

/// Reads the `q*` columns of a CSV file.
fn read_configurations(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let columns: Vec<usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .filter(|(_, h)| h.len() > 1 && h.starts_with('q') && h[1..].chars().all(|c| c.is_ascii_digit()))
        .map(|(i, _)| i)
        .collect();
    if columns.is_empty() {
        return Err(usage(format!("{} has no q0.. columns", path.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for &i in &columns {
            let field = record.get(i).unwrap_or_default();
            let v: f64 = field.trim().parse().map_err(|_| {
                usage(format!("{} row {}: `{field}` is not a number", path.display(), line + 1))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, columns.len()), values)?)
}

fn predict(run: &Run, c: PredictConfig) -> Result<ExitCode> {
    let env = read_env(&c.env)?;
    let loaded = load_model(&c.model)?;
    check_model_env(&loaded, &env)?;
    let configs = read_configurations(require_path(&c.data, "--data")?)?;
    let features = dataset::compute_features(&env, &configs)?;
    let scores: Vec<f64> = match (&loaded.model, c.precision) {
        (TrainedModel::DeepCollide(m, _), Precision::F64) => m.predict(features.view())?.1,
        (TrainedModel::DeepCollide(m, _), Precision::F32) => FoldedNetwork::<f32>::from_model(m)?
            .scores(features.mapv(|v| v as f32).view())?
            .iter()
            .map(|&s| s as f64)
            .collect(),
        (TrainedModel::Fastron(m), Precision::F64) => m.predict(features.view())?.1,
        (TrainedModel::Fastron(m), Precision::F32) => FastronPredictor::<f32>::from_model(m)
            .scores(features.mapv(|v| v as f32).view())?
            .into_iter()
            .map(f64::from)
            .collect(),
    };
    let sink: Box<dyn Write> = match &c.out {
        Some(path) => {
            create_parent(path)?;
            Box::new(io::BufWriter::new(fs::File::create(path)?))
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["index", "score", "label"])?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([
            i.to_string(),
            format!("{s:.17e}"),
            CollisionLabel::from_score(*s).value().to_string(),
        ])?;
    }
    w.flush()?;
    if let Some(path) = &c.out {
        write_json(
            &sidecar(path),
            &json!({
                "model": loaded.model.name(),
                "rows": scores.len(),
                "run": run.info(None, c.precision, &c),
            }),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepConfig {
    axis: Option<SweepAxis>,
    values: Option<Vec<usize>>,
    robots: Option<Value>,
    models: Vec<String>,
    preset: String,
    seeds: Vec<u64>,
    scale: f64,
    jobs: usize,
    train_size: usize,
    test_size: usize,
    obstacles: usize,
    placement: Placement,
    epochs: usize,
    hidden: usize,
    warmup: usize,
    repeats: usize,
    precision: Precision,
    out_dir: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let p = SweepProtocol::default();
        Self {
            axis: None,
            values: None,
            robots: None,
            models: vec!["deepcollide".into(), "fastron".into()],
            preset: "default".into(),
            seeds: p.seeds,
            scale: p.scale,
            jobs: p.jobs,
            train_size: p.train_size,
            test_size: p.test_size,
            obstacles: p.obstacles,
            placement: p.placement,
            epochs: p.training.epochs,
            hidden: p.hidden,
            warmup: p.warmup,
            repeats: p.repeats,
            precision: p.precision,
            out_dir: PathBuf::from("sweep"),
        }
    }
}

/// Robot counts from `1..6`, `1,2,3`, a number or a JSON array.
fn parse_robot_counts(v: &Value) -> Result<Vec<usize>> {
    let bad = || usage(format!("--robots must look like `1..6` or `1,2,3`, got {v}"));
    match v {
        Value::Number(n) => Ok(vec![n.as_u64().ok_or_else(bad)? as usize]),
        Value::Array(items) => items
            .iter()
            .map(|x| x.as_u64().map(|n| n as usize).ok_or_else(bad))
            .collect(),
        Value::String(s) => {
            if let Some((a, b)) = s.split_once("..") {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                Ok((a..=b).collect())
            } else {
                s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
            }
        }
        _ => Err(bad()),
    }
}

fn sweep(run: &Run, c: SweepConfig) -> Result<ExitCode> {
    let axis = c.axis.ok_or_else(|| usage("--axis is required"))?;
    let values = match (&c.values, &c.robots) {
        (Some(_), Some(_)) => return Err(usage("give either --values or --robots, not both")),
        (None, Some(r)) => {
            check_flag(axis == SweepAxis::Dof, "--robots", "only applies to the dof axis")?;
            let counts = parse_robot_counts(r)?;
            check_flag(counts.iter().all(|&k| k >= 1), "--robots", "counts must be at least 1")?;
            counts.into_iter().map(|k| k * JOINTS_PER_ROBOT).collect()
        }
        (Some(v), None) => v.clone(),
        (None, None) => axis.default_values(),
    };
    let grid = match c.preset.as_str() {
        "default" => false,
        "grid" => true,
        other => return Err(usage(format!("--preset must be default or grid, got `{other}`"))),
    };
    let mut models = Vec::new();
    for family in &c.models {
        match (family.as_str(), grid) {
            ("deepcollide", false) => models.push(deepcollide_default()),
            ("deepcollide", true) => models.extend(deepcollide_preset()),
            ("fastron", false) => models.push(fastron_default()),
            ("fastron", true) => models.extend(fastron_preset()),
            (other, _) => {
                return Err(usage(format!("--models entries must be deepcollide or fastron, got `{other}`")))
            }
        }
    }
    check_flag(c.repeats >= MIN_REPEATS, "--repeats", &format!("must be at least {MIN_REPEATS}"))?;
    let protocol = SweepProtocol {
        train_size: c.train_size,
        test_size: c.test_size,
        scale: c.scale,
        seeds: c.seeds.clone(),
        obstacles: c.obstacles,
        placement: c.placement,
        hidden: c.hidden,
        training: TrainingConfig {
            epochs: c.epochs,
            ..TrainingConfig::default()
        },
        warmup: c.warmup,
        repeats: c.repeats,
        precision: c.precision,
        jobs: c.jobs,
        ..SweepProtocol::default()
    };
    let spec = SweepSpec {
        axis,
        values,
        models,
        protocol,
    };
    let outcome = run_sweep(&spec, &c.out_dir)?;
    write_json(
        &c.out_dir.join("run.json"),
        &run.info(Some(c.seeds.first().copied().unwrap_or_default()), c.precision, &c),
    )?;
    println!(
        "{} cells complete ({} resumed), {} failed; results in {}",
        outcome.results.len(),
        outcome.resumed,
        outcome.failures.len(),
        c.out_dir.join("results.csv").display()
    );
    for f in &outcome.failures {
        eprintln!("failed cell {}: {}", f.cell, f.error);
    }
    if outcome.results.is_empty() && !outcome.failures.is_empty() {
        eprintln!("error: every sweep cell failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- pareto

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParetoConfig {
    results: Option<PathBuf>,
    model: Option<String>,
    out: Option<PathBuf>,
}

fn pareto(run: &Run, c: ParetoConfig) -> Result<ExitCode> {
    let path = require_path(&c.results, "--results")?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("{} has no `{name}` column", path.display())))
    };
    let (model_col, acc_col, time_col) = (column("model")?, column("accuracy")?, column("infer_s_mean")?);
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        if c.model.as_deref().is_some_and(|m| record.get(model_col) != Some(m)) {
            continue;
        }
        let parse = |i: usize| record.get(i).and_then(|s| s.parse::<f64>().ok());
        let (Some(acc), Some(time)) = (parse(acc_col), parse(time_col)) else {
            continue;
        };
        points.push((time, 1.0 - acc));
        rows.push(record);
    }
    let frontier = pareto_frontier(&points)?;
    let sink: Box<dyn Write> = match &c.out {
        Some(out) => {
            create_parent(out)?;
            Box::new(io::BufWriter::new(fs::File::create(out)?))
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&headers)?;
    for &i in &frontier {
        w.write_record(&rows[i])?;
    }
    w.flush()?;
    if let Some(out) = &c.out {
        write_json(
            &sidecar(out),
            &json!({
                "points": points.len(),
                "frontier": frontier.len(),
                "run": run.info(None, Precision::F64, &c),
            }),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}
