//! Network layers with explicit forward caches and hand-derived gradients.
//!
//! Layout, for `d` FK coordinates, `L` frequencies and hidden width `H`:
//!
//! ```text
//! e = encode(x)                                  (2·L·d)
//! h1 = relu(bn(fc1(e)))                          (H)
//! h2 = relu(bn(fc2(h1)))
//! h3 = relu(bn(fc3(h2)))
//! h4 = relu(bn(fc4([h3, e])))                    concatenative skip
//! h5 = relu(bn(fc5(h4)))
//! score = bn(fc_out(h5))                         (1)
//! ```

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::encoding::encode_batch;
use super::ModelConfig;
use crate::geometry::CollisionLabel;
use crate::rng::substream;
use crate::{Error, Result};

/// Number of fully-connected layers including the scalar output layer.
pub const LAYER_COUNT: usize = 6;
/// Index of the layer that also receives the encoding.
pub const SKIP_LAYER: usize = 3;
const OUTPUT_LAYER: usize = LAYER_COUNT - 1;

/// Fully-connected layer computing `x · weight + bias` (`weight` is `in × out`).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-layer values kept from a training-mode forward pass.
#[derive(Clone, Debug)]
struct LayerCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    output: Array2<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn scores(&self) -> Array1<f64> {
        self.layers[OUTPUT_LAYER].output.column(0).to_owned()
    }

    /// Normalized pre-affine activations of `layer` for the batch.
    pub fn normalized(&self, layer: usize) -> &Array2<f64> {
        &self.layers[layer].xhat
    }
}

/// Gradients in the same tensor order as [`DeepCollideModel::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub gammas: Vec<Array1<f64>>,
    pub betas: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4 * LAYER_COUNT);
        for l in 0..LAYER_COUNT {
            out.push(self.weights[l].as_slice().expect("contiguous"));
            out.push(self.biases[l].as_slice().expect("contiguous"));
            out.push(self.gammas[l].as_slice().expect("contiguous"));
            out.push(self.betas[l].as_slice().expect("contiguous"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepCollideModel {
    pub config: ModelConfig,
    pub linears: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
    mode: Mode,
    trained: bool,
}

impl DeepCollideModel {
    /// Fresh model with fan-in scaled uniform weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut linears = Vec::with_capacity(LAYER_COUNT);
        for (l, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
            let mut rng = substream(seed, "init", l as u64);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = || bound * (2.0 * rng.random::<f64>() - 1.0);
            let weight = Array2::from_shape_simple_fn((fan_in, fan_out), &mut draw);
            let bias = Array1::from_shape_simple_fn(fan_out, &mut draw);
            linears.push(Linear { weight, bias });
        }
        let norms = config
            .layer_dims()
            .into_iter()
            .map(|(_, out)| BatchNorm::new(out))
            .collect();
        Ok(Self {
            config,
            linears,
            norms,
            mode: Mode::Train,
            trained: false,
        })
    }

    /// Reassembles a model from stored tensors.
    pub fn from_parts(
        config: ModelConfig,
        linears: Vec<Linear>,
        norms: Vec<BatchNorm>,
        trained: bool,
    ) -> Result<Self> {
        config.validate()?;
        if linears.len() != LAYER_COUNT || norms.len() != LAYER_COUNT {
            return Err(Error::Format(format!("expected {LAYER_COUNT} layers")));
        }
        for (l, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
            let lin = &linears[l];
            let bn = &norms[l];
            let ok = lin.weight.dim() == (fan_in, fan_out)
                && lin.bias.len() == fan_out
                && [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                    .iter()
                    .all(|v| v.len() == fan_out);
            if !ok {
                return Err(Error::Format(format!("layer {l} has the wrong shape")));
            }
            if bn.running_var.iter().any(|&v| v < 0.0) {
                return Err(Error::Format(format!("layer {l} has a negative running variance")));
            }
        }
        Ok(Self {
            config,
            linears,
            norms,
            mode: if trained { Mode::Eval } else { Mode::Train },
            trained,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub(crate) fn mark_trained(&mut self) {
        self.trained = true;
        self.mode = Mode::Eval;
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Learnable tensors: weight, bias, gamma, beta for each layer in order.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4 * LAYER_COUNT);
        for (lin, bn) in self.linears.iter().zip(&self.norms) {
            out.push(lin.weight.as_slice().expect("contiguous"));
            out.push(lin.bias.as_slice().expect("contiguous"));
            out.push(bn.gamma.as_slice().expect("contiguous"));
            out.push(bn.beta.as_slice().expect("contiguous"));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(4 * LAYER_COUNT);
        for (lin, bn) in self.linears.iter_mut().zip(self.norms.iter_mut()) {
            out.push(lin.weight.as_slice_mut().expect("contiguous"));
            out.push(lin.bias.as_slice_mut().expect("contiguous"));
            out.push(bn.gamma.as_slice_mut().expect("contiguous"));
            out.push(bn.beta.as_slice_mut().expect("contiguous"));
        }
        out
    }

    fn check_input(&self, features: &ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.config.input_dim,
                got: features.ncols(),
            });
        }
        Ok(())
    }

    /// Scores in the current mode. Training mode normalizes with batch
    /// statistics and folds them into the running statistics.
    pub fn forward(&mut self, features: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        match self.mode {
            Mode::Eval => self.forward_eval(features),
            Mode::Train => {
                let cache = self.forward_train(features)?;
                self.update_running_stats(&cache);
                Ok(cache.scores())
            }
        }
    }

    /// Batch-statistics forward pass; leaves the model untouched.
    pub fn forward_train(&self, features: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(&features)?;
        let n = features.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(
                "training-mode batches need at least two rows".into(),
            ));
        }
        let eps = self.config.norm_eps;
        let encoded = encode_batch(features, &self.config.encoding);
        let mut layers: Vec<LayerCache> = Vec::with_capacity(LAYER_COUNT);
        for l in 0..LAYER_COUNT {
            let input = match l {
                0 => encoded.clone(),
                SKIP_LAYER => concatenate![Axis(1), layers[l - 1].output, encoded],
                _ => layers[l - 1].output.clone(),
            };
            let lin = &self.linears[l];
            let bn = &self.norms[l];
            let z = input.dot(&lin.weight) + &lin.bias;
            let batch_mean = z.mean_axis(Axis(0)).expect("batch is nonempty");
            let centered = z - &batch_mean;
            let batch_var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("batch is nonempty");
            let inv_std = batch_var.mapv(|v| 1.0 / (v + eps).sqrt());
            let xhat = centered * &inv_std;
            let mut output = &xhat * &bn.gamma + &bn.beta;
            if l != OUTPUT_LAYER {
                output.mapv_inplace(|v| v.max(0.0));
            }
            ensure_finite(&output, l, "training forward")?;
            layers.push(LayerCache {
                input,
                xhat,
                inv_std,
                output,
                batch_mean,
                batch_var,
            });
        }
        Ok(ForwardCache { layers })
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let momentum = self.config.norm_momentum;
        for (bn, layer) in self.norms.iter_mut().zip(&cache.layers) {
            let n = layer.input.nrows() as f64;
            let unbiased = &layer.batch_var * (n / (n - 1.0));
            bn.running_mean = &bn.running_mean * (1.0 - momentum) + &layer.batch_mean * momentum;
            bn.running_var = &bn.running_var * (1.0 - momentum) + unbiased * momentum;
        }
    }

    /// Running-statistics forward pass. Rows are processed independently.
    pub fn forward_eval(&self, features: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(&features)?;
        let eps = self.config.norm_eps;
        let encoded = encode_batch(features, &self.config.encoding);
        let mut h = encoded.clone();
        for l in 0..LAYER_COUNT {
            let lin = &self.linears[l];
            let bn = &self.norms[l];
            let z = if l == SKIP_LAYER {
                concatenate![Axis(1), h, encoded].dot(&lin.weight)
            } else {
                h.dot(&lin.weight)
            };
            let scale = &bn.gamma / &bn.running_var.mapv(|v| (v + eps).sqrt());
            let mut out = ((z + &lin.bias) - &bn.running_mean) * &scale + &bn.beta;
            if l != OUTPUT_LAYER {
                out.mapv_inplace(|v| v.max(0.0));
            }
            ensure_finite(&out, l, "evaluation forward")?;
            h = out;
        }
        Ok(h.column(0).to_owned())
    }

    /// Mean L1 loss of a training-mode pass and its gradients.
    ///
    /// The loss subgradient at a zero residual is taken as zero, as is the
    /// rectifier's derivative at zero.
    pub fn backward(&self, cache: &ForwardCache, targets: &[f64]) -> Result<(Gradients, f64)> {
        let scores = cache.layers[OUTPUT_LAYER].output.column(0);
        let n = scores.len();
        if targets.len() != n {
            return Err(Error::DimensionMismatch {
                context: "loss targets",
                expected: n,
                got: targets.len(),
            });
        }
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut upstream = Array2::<f64>::zeros((n, 1));
        for (i, (&s, &t)) in scores.iter().zip(targets).enumerate() {
            let r = s - t;
            loss += r.abs();
            upstream[[i, 0]] = if r > 0.0 {
                inv_n
            } else if r < 0.0 {
                -inv_n
            } else {
                0.0
            };
        }
        loss *= inv_n;

        let hidden = self.config.hidden;
        let mut weights = vec![Array2::zeros((0, 0)); LAYER_COUNT];
        let mut biases = vec![Array1::zeros(0); LAYER_COUNT];
        let mut gammas = vec![Array1::zeros(0); LAYER_COUNT];
        let mut betas = vec![Array1::zeros(0); LAYER_COUNT];

        for l in (0..LAYER_COUNT).rev() {
            let layer = &cache.layers[l];
            let bn = &self.norms[l];
            let mut dy = upstream;
            if l != OUTPUT_LAYER {
                Zip::from(&mut dy)
                    .and(&layer.output)
                    .for_each(|g, &out| {
                        if out <= 0.0 {
                            *g = 0.0;
                        }
                    });
            }
            gammas[l] = (&dy * &layer.xhat).sum_axis(Axis(0));
            betas[l] = dy.sum_axis(Axis(0));
            let dxhat = dy * &bn.gamma;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &layer.xhat).sum_axis(Axis(0));
            let dz = ((dxhat - &sum_dxhat * inv_n) - &layer.xhat * &(sum_dxhat_xhat * inv_n))
                * &layer.inv_std;
            let mut dw = Array2::zeros(self.linears[l].weight.raw_dim());
            general_mat_mul(1.0, &layer.input.t(), &dz, 0.0, &mut dw);
            weights[l] = dw;
            biases[l] = dz.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let dinput = dz.dot(&self.linears[l].weight.t());
            upstream = if l == SKIP_LAYER {
                dinput.slice(s![.., ..hidden]).to_owned()
            } else {
                dinput
            };
        }
        Ok((
            Gradients {
                weights,
                biases,
                gammas,
                betas,
            },
            loss,
        ))
    }

    /// Scores and labels of a trained model in evaluation mode.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<(Vec<CollisionLabel>, Vec<f64>)> {
        if !self.trained {
            return Err(Error::RejectedState("model has not been trained".into()));
        }
        if self.mode != Mode::Eval {
            return Err(Error::RejectedState("prediction requires evaluation mode".into()));
        }
        let scores = self.forward_eval(features)?.to_vec();
        let labels = scores.iter().map(|&s| CollisionLabel::from_score(s)).collect();
        Ok((labels, scores))
    }
}

fn ensure_finite(values: &Array2<f64>, layer: usize, context: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure {
            layer,
            context: context.to_string(),
        })
    }
}

/// Mean absolute error between scores and targets.
pub fn l1_loss(scores: &[f64], targets: &[f64]) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(s, t)| (s - t).abs())
        .sum::<f64>()
        / scores.len() as f64
}
