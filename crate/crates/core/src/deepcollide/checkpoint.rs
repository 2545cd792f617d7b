use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{BatchNorm, DeepCollideModel, Linear};
use super::{ModelConfig, TrainingConfig};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MODEL_TAG: &str = "deepcollide";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_in × fan_out`.
    weight: Vec<f64>,
    bias: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

/// Serializable snapshot of a model together with what it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub tool_version: String,
    pub model: String,
    pub config: ModelConfig,
    layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingConfig>,
    pub env_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_ref: Option<String>,
    pub trained: bool,
}

impl Checkpoint {
    pub fn from_model(
        model: &DeepCollideModel,
        training: Option<&TrainingConfig>,
        env_ref: impl Into<String>,
        dataset_ref: Option<String>,
    ) -> Self {
        let layers = model
            .linears
            .iter()
            .zip(&model.norms)
            .map(|(lin, bn)| LayerRecord {
                fan_in: lin.weight.nrows(),
                fan_out: lin.weight.ncols(),
                weight: lin.weight.iter().copied().collect(),
                bias: lin.bias.to_vec(),
                gamma: bn.gamma.to_vec(),
                beta: bn.beta.to_vec(),
                running_mean: bn.running_mean.to_vec(),
                running_var: bn.running_var.to_vec(),
            })
            .collect();
        Self {
            format_version: CHECKPOINT_VERSION,
            tool_version: crate::TOOL_VERSION.to_string(),
            model: MODEL_TAG.to_string(),
            config: model.config,
            layers,
            training: training.cloned(),
            env_ref: env_ref.into(),
            dataset_ref,
            trained: model.is_trained(),
        }
    }

    pub fn to_model(&self) -> Result<DeepCollideModel> {
        if self.model != MODEL_TAG {
            return Err(Error::Format(format!("checkpoint holds a '{}' model", self.model)));
        }
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        let mut linears = Vec::with_capacity(self.layers.len());
        let mut norms = Vec::with_capacity(self.layers.len());
        for (l, rec) in self.layers.iter().enumerate() {
            let weight = Array2::from_shape_vec((rec.fan_in, rec.fan_out), rec.weight.clone())
                .map_err(|_| Error::Format(format!("layer {l} weight has the wrong length")))?;
            linears.push(Linear {
                weight,
                bias: Array1::from(rec.bias.clone()),
            });
            norms.push(BatchNorm {
                gamma: Array1::from(rec.gamma.clone()),
                beta: Array1::from(rec.beta.clone()),
                running_mean: Array1::from(rec.running_mean.clone()),
                running_var: Array1::from(rec.running_var.clone()),
            });
        }
        DeepCollideModel::from_parts(self.config, linears, norms, self.trained)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}
