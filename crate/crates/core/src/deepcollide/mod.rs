//! Implicit neural representation of the collision function.
//!
//! FK control points are expanded with an on-axis sinusoidal encoding and
//! fed to five normalized, rectified hidden layers. The encoding is
//! concatenated back in at the fourth layer, and a normalized scalar head
//! produces a collision score whose sign is the prediction. Training
//! regresses scores onto `-1` (free) and `+β` (collision) with L1 loss.

mod checkpoint;
mod encoding;
mod inference;
mod network;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use encoding::{encode_batch, positional_encode, PositionalEncodingSpec};
pub use inference::FoldedNetwork;
pub use network::{
    l1_loss, BatchNorm, DeepCollideModel, ForwardCache, Gradients, Linear, Mode, LAYER_COUNT,
    SKIP_LAYER,
};
pub use optim::{cosine_lr, Adam};
pub use train::{fit, train, EpochRecord, TrainingReport, MIN_TRAINING_ROWS};

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoding: PositionalEncodingSpec,
    /// Number of FK coordinates (`3 · links`).
    pub input_dim: usize,
    pub hidden: usize,
    pub norm_momentum: f64,
    pub norm_eps: f64,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN: usize = 256;

    pub fn new(encoding: PositionalEncodingSpec, input_dim: usize, hidden: usize) -> Self {
        Self {
            encoding,
            input_dim,
            hidden,
            norm_momentum: 0.1,
            norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidInput("input and hidden widths must be positive".into()));
        }
        if !(self.norm_momentum > 0.0 && self.norm_momentum <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "normalization momentum {} outside (0, 1]",
                self.norm_momentum
            )));
        }
        if !(self.norm_eps >= 0.0 && self.norm_eps.is_finite()) {
            return Err(Error::InvalidInput("normalization epsilon must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn encoded_dim(&self) -> usize {
        self.encoding.output_dim(self.input_dim)
    }

    /// `(fan_in, fan_out)` of each fully-connected layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let e = self.encoded_dim();
        let h = self.hidden;
        vec![(e, h), (h, h), (h, h), (h + e, h), (h, h), (h, 1)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Target value for collision rows; free rows stay at `-1`.
    pub beta: f64,
    pub early_stop_patience: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 512,
            lr_max: 1e-3,
            lr_min: 1e-7,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            beta: 1.0,
            early_stop_patience: 10,
            train_fraction: 0.95,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch size {} must be at least 2", self.batch_size));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return bad(format!(
                "learning rates must satisfy 0 < lr_min ({}) <= lr_max ({})",
                self.lr_min, self.lr_max
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("bias beta {} must be positive", self.beta));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.early_stop_patience == 0 {
            return bad("early-stop patience must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction {} outside (0, 1)", self.train_fraction));
        }
        Ok(())
    }
}
