use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::runner::{evaluate, train_model, ModelSpec, Precision};
use super::timing::{DEFAULT_REPEATS, DEFAULT_WARMUP};
use super::ConfusionCounts;
use crate::dataset::sample_dataset;
use crate::deepcollide::{ModelConfig, TrainingConfig};
use crate::geometry::{generate_environment, Environment, Placement};
use crate::rng::derive_seed;
use crate::{Error, Result};

pub const JOINTS_PER_ROBOT: usize = 7;
/// Fastron caps used on the sample-size axis.
pub const SAMPLE_SIZE_AXIS_CAP: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Values are total DoF, a multiple of seven.
    Dof,
    /// Values are obstacle counts with three robots.
    Density,
    /// Values are training-set sizes.
    #[serde(alias = "sample-size")]
    SampleSize,
}

impl SweepAxis {
    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepAxis::Dof => (1..=6).map(|k| k * JOINTS_PER_ROBOT).collect(),
            SweepAxis::Density => vec![10, 20, 30, 40, 50, 60],
            SweepAxis::SampleSize => vec![100, 1_000, 10_000, 100_000],
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Dof => "dof",
            SweepAxis::Density => "density",
            SweepAxis::SampleSize => "sample_size",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dof" => Ok(SweepAxis::Dof),
            "density" => Ok(SweepAxis::Density),
            "sample_size" | "sample-size" => Ok(SweepAxis::SampleSize),
            other => Err(Error::InvalidInput(format!(
                "axis must be dof, density or sample_size, got `{other}`"
            ))),
        }
    }
}

/// Table-style Fastron grid: 3 × 2 × 3 × 3 = 54 settings.
pub fn fastron_preset() -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for max_support in [3_000, 10_000, 30_000] {
        for max_updates in [5_000, 30_000] {
            for gamma in [1.0, 5.0, 10.0] {
                for beta in [1.0, 500.0, 1000.0] {
                    grid.push(ModelSpec::Fastron {
                        gamma,
                        beta,
                        max_updates,
                        max_support,
                    });
                }
            }
        }
    }
    grid
}

/// DeepCollide grid: 3 × 3 × 3 = 27 settings.
pub fn deepcollide_preset() -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for frequencies in [4, 8, 12] {
        for beta in [1.0, 2.0, 5.0] {
            for sigma in [0.5, 1.0, 2.0] {
                grid.push(ModelSpec::DeepCollide {
                    frequencies,
                    beta,
                    sigma,
                });
            }
        }
    }
    grid
}

pub fn fastron_default() -> ModelSpec {
    ModelSpec::Fastron {
        gamma: 5.0,
        beta: 500.0,
        max_updates: 5_000,
        max_support: 30_000,
    }
}

pub fn deepcollide_default() -> ModelSpec {
    ModelSpec::DeepCollide {
        frequencies: 12,
        beta: 1.0,
        sigma: 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepProtocol {
    pub train_size: usize,
    pub test_size: usize,
    /// Multiplies both sizes; values below 1 shrink runs for quick checks.
    pub scale: f64,
    pub seeds: Vec<u64>,
    pub robots: usize,
    pub density_robots: usize,
    pub obstacles: usize,
    pub placement: Placement,
    pub hidden: usize,
    pub training: TrainingConfig,
    pub warmup: usize,
    pub repeats: usize,
    pub precision: Precision,
    pub jobs: usize,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self {
            train_size: 30_000,
            test_size: 5_000,
            scale: 1.0,
            seeds: vec![0, 1, 2],
            robots: 2,
            density_robots: 3,
            obstacles: 25,
            placement: Placement::Far,
            hidden: ModelConfig::DEFAULT_HIDDEN,
            training: TrainingConfig::default(),
            warmup: DEFAULT_WARMUP,
            repeats: DEFAULT_REPEATS,
            precision: Precision::F64,
            jobs: 1,
        }
    }
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub models: Vec<ModelSpec>,
    pub protocol: SweepProtocol,
}

/// Environment and data sizes for one axis value.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Setting {
    robots: usize,
    obstacles: usize,
    train_size: usize,
    test_size: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.models.is_empty() || self.protocol.seeds.is_empty() {
            return Err(Error::InvalidInput("sweep needs values, models and seeds".into()));
        }
        if !(self.protocol.scale > 0.0 && self.protocol.scale.is_finite()) {
            return Err(Error::InvalidInput("scale must be positive".into()));
        }
        if self.protocol.jobs == 0 {
            return Err(Error::InvalidInput("jobs must be at least 1".into()));
        }
        self.protocol.training.validate()?;
        for &v in &self.values {
            self.setting(v)?;
        }
        Ok(())
    }

    fn setting(&self, value: usize) -> Result<Setting> {
        let p = &self.protocol;
        let train_size = scaled(p.train_size, p.scale);
        let test_size = scaled(p.test_size, p.scale);
        match self.axis {
            SweepAxis::Dof => {
                if value == 0 || !value.is_multiple_of(JOINTS_PER_ROBOT) {
                    return Err(Error::InvalidInput(format!(
                        "dof value {value} is not a positive multiple of {JOINTS_PER_ROBOT}"
                    )));
                }
                Ok(Setting {
                    robots: value / JOINTS_PER_ROBOT,
                    obstacles: p.obstacles,
                    train_size,
                    test_size,
                })
            }
            SweepAxis::Density => Ok(Setting {
                robots: p.density_robots,
                obstacles: value,
                train_size,
                test_size,
            }),
            SweepAxis::SampleSize => {
                if value == 0 {
                    return Err(Error::InvalidInput("sample size must be positive".into()));
                }
                Ok(Setting {
                    robots: p.robots,
                    obstacles: p.obstacles,
                    train_size: value,
                    test_size,
                })
            }
        }
    }

    /// Model actually trained for `spec` on this axis.
    fn effective_model(&self, spec: &ModelSpec) -> ModelSpec {
        match (self.axis, spec) {
            (SweepAxis::SampleSize, &ModelSpec::Fastron { gamma, beta, .. }) => ModelSpec::Fastron {
                gamma,
                beta,
                max_updates: SAMPLE_SIZE_AXIS_CAP,
                max_support: SAMPLE_SIZE_AXIS_CAP,
            },
            _ => spec.clone(),
        }
    }
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub value: usize,
    pub model: String,
    pub hyperparameters: String,
    pub accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub train_s: f64,
    pub infer_s_mean: f64,
    pub infer_s_std: f64,
    pub infer_s_median: f64,
    pub seed: u64,
    pub env_seed: u64,
    pub env_ref: String,
    pub counts: ConfusionCounts,
    pub termination_reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub results: Vec<SweepResult>,
    pub failures: Vec<CellFailure>,
    /// Cells loaded from completion markers instead of being rerun.
    pub resumed: usize,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    axis: String,
    value: usize,
    model: &'a str,
    hyperparameters: &'a str,
    accuracy: Option<f64>,
    tpr: Option<f64>,
    tnr: Option<f64>,
    train_s: f64,
    infer_s_mean: f64,
    infer_s_std: f64,
    seed: u64,
    termination_reason: &'a str,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn cell_id(axis: SweepAxis, value: usize, seed: u64, spec: &ModelSpec) -> String {
    sanitize(&format!("{axis}-{value}-s{seed}-{}-{}", spec.name(), spec.hyperparameters()))
}

fn marker_path(out_dir: &Path, id: &str) -> PathBuf {
    out_dir.join("cells").join(format!("{id}.json"))
}

fn read_marker(path: &Path) -> Option<SweepResult> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Seed of the environment used for `(value, seed)`.
pub fn environment_seed(axis: SweepAxis, value: usize, seed: u64) -> u64 {
    derive_seed(seed, &format!("sweep/env/{axis}"), value as u64)
}

fn run_group(
    spec: &SweepSpec,
    out_dir: &Path,
    value: usize,
    seed: u64,
    pending: &[(String, ModelSpec)],
) -> (Vec<SweepResult>, Vec<CellFailure>) {
    let fail_all = |e: &Error| {
        let failures = pending
            .iter()
            .map(|(id, _)| CellFailure {
                cell: id.clone(),
                error: e.to_string(),
            })
            .collect();
        (Vec::new(), failures)
    };
    let setting = match spec.setting(value) {
        Ok(s) => s,
        Err(e) => return fail_all(&e),
    };
    let env_seed = environment_seed(spec.axis, value, seed);
    let prepared = (|| -> Result<_> {
        let env: Environment =
            generate_environment(setting.robots, setting.obstacles, env_seed, spec.protocol.placement)?;
        let train = sample_dataset(&env, setting.train_size, derive_seed(env_seed, "sweep/train", 0))?;
        let test = sample_dataset(&env, setting.test_size, derive_seed(env_seed, "sweep/test", 0))?;
        let test_x = test.fk_features(&env)?.clone();
        Ok((env, train, test, test_x))
    })();
    let (env, train, test, test_x) = match prepared {
        Ok(p) => p,
        Err(e) => return fail_all(&e),
    };

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (id, model_spec) in pending {
        let outcome = (|| -> Result<SweepResult> {
            let training = TrainingConfig {
                seed,
                ..spec.protocol.training.clone()
            };
            let (model, train_s) =
                train_model(model_spec, &env, &train, spec.protocol.hidden, &training)?;
            let eval = evaluate(
                &model,
                &test_x,
                test.labels(),
                spec.protocol.warmup,
                spec.protocol.repeats,
                spec.protocol.precision,
            )?;
            Ok(SweepResult {
                axis: spec.axis,
                value,
                model: model_spec.name().to_string(),
                hyperparameters: model_spec.hyperparameters(),
                accuracy: eval.metrics.accuracy,
                tpr: eval.metrics.tpr,
                tnr: eval.metrics.tnr,
                train_s,
                infer_s_mean: eval.timing.per_inference_mean,
                infer_s_std: eval.timing.per_inference_std,
                infer_s_median: eval.timing.per_inference_median,
                seed,
                env_seed,
                env_ref: env.reference(),
                counts: eval.counts,
                termination_reason: model.termination_reason(),
            })
        })();
        match outcome {
            Ok(result) => {
                let written = serde_json::to_vec_pretty(&result)
                    .map_err(Error::from)
                    .and_then(|bytes| write_atomic(&marker_path(out_dir, id), &bytes));
                if let Err(e) = written {
                    log::warn!("cell {id}: could not write completion marker: {e}");
                }
                log::info!("cell {id} done");
                results.push(result);
            }
            Err(e) => {
                log::warn!("cell {id} failed: {e}");
                failures.push(CellFailure {
                    cell: id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    (results, failures)
}

/// Runs every (value, seed, model) cell not already completed under
/// `out_dir`, then rewrites `results.csv` and `index.json` there.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<SweepOutcome> {
    spec.validate()?;
    fs::create_dir_all(out_dir.join("cells"))?;

    let mut outcome = SweepOutcome::default();
    let mut groups = Vec::new();
    for &value in &spec.values {
        for &seed in &spec.protocol.seeds {
            let mut pending = Vec::new();
            for m in &spec.models {
                let model = spec.effective_model(m);
                let id = cell_id(spec.axis, value, seed, &model);
                match read_marker(&marker_path(out_dir, &id)) {
                    Some(done) => {
                        outcome.results.push(done);
                        outcome.resumed += 1;
                    }
                    None => pending.push((id, model)),
                }
            }
            if !pending.is_empty() {
                groups.push((value, seed, pending));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.protocol.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let ran: Vec<_> = pool.install(|| {
        groups
            .par_iter()
            .map(|(value, seed, pending)| run_group(spec, out_dir, *value, *seed, pending))
            .collect()
    });
    for (results, failures) in ran {
        outcome.results.extend(results);
        outcome.failures.extend(failures);
    }
    outcome.results.sort_by(|a, b| {
        (a.value, a.seed, &a.model, &a.hyperparameters).cmp(&(b.value, b.seed, &b.model, &b.hyperparameters))
    });

    write_results_csv(&outcome.results, &out_dir.join("results.csv"))?;
    let index = serde_json::json!({
        "tool_version": crate::TOOL_VERSION,
        "spec": spec,
        "results": outcome.results,
        "failures": outcome.failures,
    });
    write_atomic(&out_dir.join("index.json"), &serde_json::to_vec_pretty(&index)?)?;
    Ok(outcome)
}

pub fn write_results_csv(results: &[SweepResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        w.serialize(CsvRow {
            axis: r.axis.to_string(),
            value: r.value,
            model: &r.model,
            hyperparameters: &r.hyperparameters,
            accuracy: r.accuracy,
            tpr: r.tpr,
            tnr: r.tnr,
            train_s: r.train_s,
            infer_s_mean: r.infer_s_mean,
            infer_s_std: r.infer_s_std,
            seed: r.seed,
            termination_reason: r.termination_reason.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}
