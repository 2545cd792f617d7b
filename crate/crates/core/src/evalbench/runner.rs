use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ConfusionCounts, Metrics};
use super::timing::{time_inference, TimingReport};
use crate::dataset::LabeledDataset;
use crate::deepcollide::{
    self, DeepCollideModel, FoldedNetwork, ModelConfig, PositionalEncodingSpec, TrainingConfig,
    TrainingReport,
};
use crate::fastron::{fastron_train, FastronConfig, FastronModel, FastronPredictor};
use crate::geometry::{CollisionLabel, Environment};
use crate::{Error, Result};

/// One hyperparameter setting of one model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    DeepCollide {
        frequencies: usize,
        beta: f64,
        sigma: f64,
    },
    Fastron {
        gamma: f64,
        beta: f64,
        max_updates: usize,
        max_support: usize,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::DeepCollide { .. } => "deepcollide",
            ModelSpec::Fastron { .. } => "fastron",
        }
    }

    /// Compact `key=value` rendering used in result tables.
    pub fn hyperparameters(&self) -> String {
        match self {
            ModelSpec::DeepCollide {
                frequencies,
                beta,
                sigma,
            } => format!("L={frequencies};beta={beta};sigma={sigma}"),
            ModelSpec::Fastron {
                gamma,
                beta,
                max_updates,
                max_support,
            } => format!("gamma={gamma};beta={beta};I_max={max_updates};S_max={max_support}"),
        }
    }
}

/// Numeric precision used for timed inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    #[serde(alias = "f64-test")]
    F64,
    #[serde(alias = "f32-bench")]
    F32,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" | "f64-test" => Ok(Precision::F64),
            "f32" | "f32-bench" => Ok(Precision::F32),
            other => Err(Error::InvalidInput(format!("precision must be f64 or f32, got `{other}`"))),
        }
    }
}

pub enum TrainedModel {
    /// The report is absent for models loaded from a checkpoint.
    DeepCollide(DeepCollideModel, Option<TrainingReport>),
    Fastron(FastronModel),
}

impl TrainedModel {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedModel::DeepCollide(..) => "deepcollide",
            TrainedModel::Fastron(_) => "fastron",
        }
    }

    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<CollisionLabel>> {
        match self {
            TrainedModel::DeepCollide(m, _) => Ok(m.predict(features.view())?.0),
            TrainedModel::Fastron(m) => Ok(m.predict(features.view())?.0),
        }
    }

    pub fn termination_reason(&self) -> Option<String> {
        match self {
            TrainedModel::DeepCollide(_, r) => r
                .as_ref()
                .map(|r| if r.stopped_early { "early_stop" } else { "epochs" }.to_string()),
            TrainedModel::Fastron(m) => m.termination().map(|t| t.to_string()),
        }
    }
}

/// Trains `spec` on the FK features of `train`.
///
/// `training` supplies the DeepCollide optimisation settings; its `beta` is
/// replaced by the spec's.
pub fn train_model(
    spec: &ModelSpec,
    env: &Environment,
    train: &LabeledDataset,
    hidden: usize,
    training: &TrainingConfig,
) -> Result<(TrainedModel, f64)> {
    let started = Instant::now();
    let model = match *spec {
        ModelSpec::DeepCollide {
            frequencies,
            beta,
            sigma,
        } => {
            let encoding = PositionalEncodingSpec::new(frequencies, sigma)?;
            let config = ModelConfig::new(encoding, env.feature_dim(), hidden);
            let training = TrainingConfig {
                beta,
                ..training.clone()
            };
            let (model, report) = deepcollide::train(train, env, &config, &training)?;
            TrainedModel::DeepCollide(model, Some(report))
        }
        ModelSpec::Fastron {
            gamma,
            beta,
            max_updates,
            max_support,
        } => {
            let config = FastronConfig::new(gamma, beta, max_updates, max_support)?;
            let features = train.fk_features(env)?;
            TrainedModel::Fastron(fastron_train(features.view(), train.labels(), &config)?)
        }
    };
    Ok((model, started.elapsed().as_secs_f64()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub timing: TimingReport,
}

/// Labels and inference timing on precomputed test features, both at
/// `precision`.
pub fn evaluate(
    model: &TrainedModel,
    features: &Array2<f64>,
    labels: &[CollisionLabel],
    warmup: usize,
    repeats: usize,
    precision: Precision,
) -> Result<Evaluation> {
    let n = features.nrows();
    let (predicted, timing) = match (model, precision) {
        (TrainedModel::DeepCollide(m, _), Precision::F64) => {
            let net = FoldedNetwork::<f64>::from_model(m)?;
            let timing = time_inference(n, warmup, repeats, || net.scores(features.view()))?;
            (model.predict(features)?, timing)
        }
        (TrainedModel::DeepCollide(m, _), Precision::F32) => {
            let net = FoldedNetwork::<f32>::from_model(m)?;
            let x = features.mapv(|v| v as f32);
            let timing = time_inference(n, warmup, repeats, || net.scores(x.view()))?;
            (net.predict(x.view())?, timing)
        }
        (TrainedModel::Fastron(m), Precision::F64) => {
            let p = m.predictor();
            let timing = time_inference(n, warmup, repeats, || p.scores(features.view()))?;
            (model.predict(features)?, timing)
        }
        (TrainedModel::Fastron(m), Precision::F32) => {
            let p = FastronPredictor::<f32>::from_model(m);
            let x = features.mapv(|v| v as f32);
            let timing = time_inference(n, warmup, repeats, || p.scores(x.view()))?;
            (p.predict(x.view())?, timing)
        }
    };
    let counts = ConfusionCounts::from_labels(&predicted, labels)?;
    Ok(Evaluation {
        counts,
        metrics: compute_metrics(&counts),
        timing,
    })
}
