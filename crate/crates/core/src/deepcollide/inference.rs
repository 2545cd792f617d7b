use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use num_traits::Float;

use super::encoding::encode_batch;
use super::network::{DeepCollideModel, LAYER_COUNT, SKIP_LAYER};
use super::PositionalEncodingSpec;
use crate::geometry::CollisionLabel;
use crate::{Error, Result};

/// Evaluation-only network with normalization folded into each linear layer.
///
/// `T = f32` gives a reduced-precision variant for benchmarking.
#[derive(Clone, Debug)]
pub struct FoldedNetwork<T> {
    encoding: PositionalEncodingSpec,
    input_dim: usize,
    weights: Vec<Array2<T>>,
    biases: Vec<Array1<T>>,
}

impl<T: Float + 'static> FoldedNetwork<T> {
    pub fn from_model(model: &DeepCollideModel) -> Result<Self> {
        if !model.is_trained() {
            return Err(Error::RejectedState("model has not been trained".into()));
        }
        let eps = model.config.norm_eps;
        let cast = |v: f64| T::from(v).expect("finite parameter");
        let mut weights = Vec::with_capacity(LAYER_COUNT);
        let mut biases = Vec::with_capacity(LAYER_COUNT);
        for (lin, bn) in model.linears.iter().zip(&model.norms) {
            let scale = &bn.gamma / &bn.running_var.mapv(|v| (v + eps).sqrt());
            let w = &lin.weight * &scale;
            let b = (&lin.bias - &bn.running_mean) * &scale + &bn.beta;
            weights.push(w.mapv(cast));
            biases.push(b.mapv(cast));
        }
        Ok(Self {
            encoding: model.config.encoding,
            input_dim: model.config.input_dim,
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn scores(&self, features: ArrayView2<'_, T>) -> Result<Array1<T>> {
        if features.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "network input features",
                expected: self.input_dim,
                got: features.ncols(),
            });
        }
        let encoded = encode_batch(features, &self.encoding);
        let mut h = encoded.clone();
        for l in 0..LAYER_COUNT {
            let z = if l == SKIP_LAYER {
                concatenate![Axis(1), h, encoded].dot(&self.weights[l])
            } else {
                h.dot(&self.weights[l])
            };
            let mut out = z + &self.biases[l];
            if l + 1 != LAYER_COUNT {
                out.mapv_inplace(|v| v.max(T::zero()));
            }
            h = out;
        }
        Ok(h.column(0).to_owned())
    }

    pub fn predict(&self, features: ArrayView2<'_, T>) -> Result<Vec<CollisionLabel>> {
        Ok(self
            .scores(features)?
            .iter()
            .map(|s| CollisionLabel::from_score(s.to_f64().unwrap_or(f64::NAN)))
            .collect())
    }
}
