use std::time::Instant;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{BatchNorm, DeepCollideModel, Linear, Mode};
use super::optim::{cosine_lr, Adam};
use super::{ModelConfig, TrainingConfig};
use crate::dataset::{scale_targets, split_indices, LabeledDataset, SplitSpec};
use crate::geometry::{CollisionLabel, Environment};
use crate::rng::{derive_seed, substream};
use crate::{Error, Result};

/// Smallest dataset `train` accepts: enough for a validation split and
/// batches of at least two rows.
pub const MIN_TRAINING_ROWS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub validation_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub stopped_early: bool,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub train_seconds: f64,
}

/// Splits `dataset`, trains a fresh model on its FK features and returns the
/// snapshot with the best validation accuracy.
pub fn train(
    dataset: &LabeledDataset,
    env: &Environment,
    model_config: &ModelConfig,
    config: &TrainingConfig,
) -> Result<(DeepCollideModel, TrainingReport)> {
    config.validate()?;
    if dataset.len() < MIN_TRAINING_ROWS {
        return Err(Error::InvalidInput(format!(
            "training needs at least {MIN_TRAINING_ROWS} rows, got {}",
            dataset.len()
        )));
    }
    if model_config.input_dim != env.feature_dim() {
        return Err(Error::DimensionMismatch {
            context: "model input vs environment features",
            expected: env.feature_dim(),
            got: model_config.input_dim,
        });
    }
    let features = dataset.fk_features(env)?;
    let split = SplitSpec::new(config.train_fraction, derive_seed(config.seed, "split", 0))?;
    let (train_idx, val_idx) = split_indices(dataset.len(), &split)?;
    let train_x = features.select(Axis(0), &train_idx);
    let val_x = features.select(Axis(0), &val_idx);
    let labels = dataset.labels();
    let train_y: Vec<_> = train_idx.iter().map(|&i| labels[i]).collect();
    let val_y: Vec<_> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut model = DeepCollideModel::new(*model_config, derive_seed(config.seed, "init", 0))?;
    let report = fit(&mut model, train_x.view(), &train_y, val_x.view(), &val_y, config)?;
    Ok((model, report))
}

fn accuracy(model: &DeepCollideModel, x: ArrayView2<'_, f64>, y: &[CollisionLabel]) -> Result<f64> {
    let scores = model.forward_eval(x)?;
    let correct = scores
        .iter()
        .zip(y)
        .filter(|(&s, &label)| CollisionLabel::from_score(s) == label)
        .count();
    Ok(correct as f64 / y.len() as f64)
}

/// Mini-batch training loop on precomputed features.
///
/// Each epoch visits a seeded permutation of the training rows in batches
/// of `batch_size`; a trailing batch with fewer than two rows is skipped.
/// The learning rate follows the cosine schedule per epoch.
pub fn fit(
    model: &mut DeepCollideModel,
    train_x: ArrayView2<'_, f64>,
    train_y: &[CollisionLabel],
    val_x: ArrayView2<'_, f64>,
    val_y: &[CollisionLabel],
    config: &TrainingConfig,
) -> Result<TrainingReport> {
    config.validate()?;
    if train_x.nrows() != train_y.len() || val_x.nrows() != val_y.len() {
        return Err(Error::InvalidInput("feature and label row counts differ".into()));
    }
    if train_y.len() < 2 || val_y.is_empty() {
        return Err(Error::InvalidInput(
            "need at least two training rows and one validation row".into(),
        ));
    }
    let targets = scale_targets(train_y, config.beta)?;
    let mut adam = Adam::new(config.adam_beta1, config.adam_beta2, config.adam_eps);
    let started = Instant::now();

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Linear>, Vec<BatchNorm>)> = None;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_y.len()).collect();
    let mut batch_targets = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        let lr = cosine_lr(epoch, config);
        model.set_mode(Mode::Train);
        order.sort_unstable();
        order.shuffle(&mut substream(config.seed, "epoch", epoch as u64));

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let x = train_x.select(Axis(0), chunk);
            batch_targets.clear();
            batch_targets.extend(chunk.iter().map(|&i| targets[i]));
            let with_context = |e: Error| match e {
                Error::NumericalFailure { layer, context } => Error::NumericalFailure {
                    layer,
                    context: format!("{context}, epoch {epoch} batch {b}"),
                },
                other => other,
            };
            let cache = model.forward_train(x.view()).map_err(with_context)?;
            let (grads, loss) = model.backward(&cache, &batch_targets)?;
            model.update_running_stats(&cache);
            adam.step(model.parameters_mut(), grads.tensors(), lr);
            loss_sum += loss;
            batches += 1;
        }

        let validation_accuracy = accuracy(model, val_x, val_y)?;
        records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            mean_loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            validation_accuracy,
            seconds: epoch_start.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: lr {lr:.3e} loss {:.5} val acc {validation_accuracy:.4}",
            records.last().map_or(f64::NAN, |r| r.mean_loss)
        );

        let improved = best.as_ref().is_none_or(|(_, acc, _, _)| validation_accuracy > *acc);
        if improved {
            best = Some((epoch, validation_accuracy, model.linears.clone(), model.norms.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= config.early_stop_patience {
            stopped_early = epoch + 1 < config.epochs;
            break;
        }
    }

    let (best_epoch, best_validation_accuracy, linears, norms) =
        best.expect("at least one epoch ran");
    model.linears = linears;
    model.norms = norms;
    model.mark_trained();

    Ok(TrainingReport {
        epochs: records,
        best_epoch,
        best_validation_accuracy,
        stopped_early,
        train_rows: train_y.len(),
        validation_rows: val_y.len(),
        train_seconds: started.elapsed().as_secs_f64(),
    })
}
