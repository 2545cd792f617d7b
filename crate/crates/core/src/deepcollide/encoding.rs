use ndarray::{Array2, ArrayView2};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// On-axis sinusoidal encoding with `frequencies` harmonics of step `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionalEncodingSpec {
    pub frequencies: usize,
    pub sigma: f64,
}

impl PositionalEncodingSpec {
    pub fn new(frequencies: usize, sigma: f64) -> Result<Self> {
        let spec = Self { frequencies, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies == 0 {
            return Err(Error::InvalidInput("encoding needs at least one frequency".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma {} must be positive", self.sigma)));
        }
        Ok(())
    }

    /// Encoded width for `input_dim` coordinates.
    pub fn output_dim(&self, input_dim: usize) -> usize {
        2 * self.frequencies * input_dim
    }
}

/// `(sin(kσp), cos(kσp))` for `k = 1..=L`, coordinate-major then frequency-major.
pub fn positional_encode(features: &[f64], spec: &PositionalEncodingSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.output_dim(features.len())];
    encode_row(features, spec, &mut out);
    out
}

fn encode_row<T: Float>(features: &[T], spec: &PositionalEncodingSpec, out: &mut [T]) {
    let sigma = T::from(spec.sigma).expect("sigma is representable");
    let mut slot = out.chunks_exact_mut(2);
    for &p in features {
        for k in 1..=spec.frequencies {
            let (s, c) = (T::from(k).expect("small integer") * sigma * p).sin_cos();
            let pair = slot.next().expect("output sized for every pair");
            pair[0] = s;
            pair[1] = c;
        }
    }
}

/// Row-wise encoding of a batch.
pub fn encode_batch<T: Float + 'static>(
    features: ArrayView2<'_, T>,
    spec: &PositionalEncodingSpec,
) -> Array2<T> {
    let (n, d) = features.dim();
    let width = spec.output_dim(d);
    let mut out = Array2::<T>::zeros((n, width));
    let mut row = vec![T::zero(); d];
    for (src, mut dst) in features.outer_iter().zip(out.outer_iter_mut()) {
        for (r, v) in row.iter_mut().zip(src.iter()) {
            *r = *v;
        }
        encode_row(&row, spec, dst.as_slice_mut().expect("fresh array is contiguous"));
    }
    out
}
