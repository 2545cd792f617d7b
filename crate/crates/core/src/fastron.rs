//! Fastron: a kernel perceptron over FK features.
//!
//! Training repeatedly corrects the worst-margin sample with a single weight
//! update, computing Gram columns only when a sample is first updated.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::CollisionLabel;
use crate::{Error, Result};

pub const FASTRON_FORMAT_VERSION: u32 = 1;
const MODEL_TAG: &str = "fastron";
/// Default memory allowed for cached Gram columns.
pub const DEFAULT_CACHE_BYTES: usize = 1 << 30;

/// Rational-quadratic kernel `(1 + γ/2 · ‖a − b‖²)^-2`.
pub fn kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    kernel_generic(a, b, gamma)
}

#[inline]
fn kernel_generic<T: Float>(a: &[T], b: &[T], gamma: T) -> T {
    let sq = a
        .iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    let base = T::one() + gamma * sq / (T::one() + T::one());
    (base * base).recip()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastronConfig {
    pub gamma: f64,
    /// Target margin for collision samples; free samples target 1.
    pub beta: f64,
    pub max_updates: usize,
    pub max_support: usize,
    #[serde(default = "default_cache_bytes", skip_serializing)]
    pub cache_bytes: usize,
}

fn default_cache_bytes() -> usize {
    DEFAULT_CACHE_BYTES
}

impl FastronConfig {
    pub fn new(gamma: f64, beta: f64, max_updates: usize, max_support: usize) -> Result<Self> {
        let config = Self {
            gamma,
            beta,
            max_updates,
            max_support,
            cache_bytes: DEFAULT_CACHE_BYTES,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma {} must be positive", self.gamma)));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta {} must be at least 1", self.beta)));
        }
        if self.max_updates == 0 || self.max_support == 0 {
            return Err(Error::InvalidInput("update and support caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
    SupportCapBlocked,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::IterationCap => "iteration_cap",
            Termination::SupportCapBlocked => "support_cap_blocked",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastronReport {
    pub termination: Termination,
    pub updates: usize,
    pub support_count: usize,
    pub removed: usize,
    /// Wall time; not serialized so that model files are reproducible.
    #[serde(skip)]
    pub train_seconds: f64,
}

/// FIFO cache of Gram columns bounded by a byte budget.
#[derive(Debug, Default)]
struct GramCache {
    columns: HashMap<usize, Arc<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl GramCache {
    fn new(n: usize, budget_bytes: usize) -> Self {
        let column_bytes = (n * std::mem::size_of::<f64>()).max(1);
        Self {
            columns: HashMap::new(),
            order: VecDeque::new(),
            capacity: (budget_bytes / column_bytes).max(1),
        }
    }

    fn len(&self) -> usize {
        self.columns.len()
    }

    fn get_or_insert(&mut self, i: usize, compute: impl FnOnce() -> Vec<f64>) -> Arc<Vec<f64>> {
        if let Some(col) = self.columns.get(&i) {
            return Arc::clone(col);
        }
        if self.columns.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.columns.remove(&old);
            }
        }
        let col = Arc::new(compute());
        self.columns.insert(i, Arc::clone(&col));
        self.order.push_back(i);
        col
    }
}

/// Compact support set used for prediction; cost scales with its size.
#[derive(Clone, Debug)]
pub struct FastronPredictor<T> {
    dim: usize,
    gamma: T,
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Float + Send + Sync> FastronPredictor<T> {
    pub fn from_model(model: &FastronModel) -> Self {
        let cast = |v: f64| T::from(v).expect("finite value");
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (i, &a) in model.alpha.iter().enumerate() {
            if a != 0.0 {
                points.extend(model.features.row(i).iter().map(|&v| cast(v)));
                weights.push(cast(a));
            }
        }
        Self {
            dim: model.features.ncols(),
            gamma: cast(model.config.gamma),
            points,
            weights,
        }
    }

    pub fn support_count(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, query: &[T]) -> T {
        self.points
            .chunks_exact(self.dim.max(1))
            .zip(&self.weights)
            .fold(T::zero(), |acc, (p, &w)| acc + w * kernel_generic(p, query, self.gamma))
    }

    pub fn scores(&self, queries: ArrayView2<'_, T>) -> Result<Vec<T>> {
        if queries.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "fastron query features",
                expected: self.dim,
                got: queries.ncols(),
            });
        }
        let mut row = vec![T::zero(); self.dim];
        Ok(queries
            .outer_iter()
            .map(|q| {
                for (r, v) in row.iter_mut().zip(q.iter()) {
                    *r = *v;
                }
                self.score(&row)
            })
            .collect())
    }

    pub fn predict(&self, queries: ArrayView2<'_, T>) -> Result<Vec<CollisionLabel>> {
        Ok(self
            .scores(queries)?
            .into_iter()
            .map(|s| CollisionLabel::from_score(s.to_f64().unwrap_or(f64::NAN)))
            .collect())
    }
}

#[derive(Debug)]
pub struct FastronModel {
    pub config: FastronConfig,
    features: Array2<f64>,
    labels: Vec<f64>,
    alpha: Vec<f64>,
    hypothesis: Vec<f64>,
    cache: GramCache,
    predictor: FastronPredictor<f64>,
    report: Option<FastronReport>,
}

fn label_values(labels: &[CollisionLabel]) -> Vec<f64> {
    labels.iter().map(|l| l.as_f64()).collect()
}

impl FastronModel {
    fn empty(features: Array2<f64>, labels: &[CollisionLabel], config: FastronConfig) -> Result<Self> {
        config.validate()?;
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(Error::InvalidInput("fastron needs at least one sample and feature".into()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                context: "fastron labels",
                expected: n,
                got: labels.len(),
            });
        }
        let cache = GramCache::new(n, config.cache_bytes);
        let predictor = FastronPredictor {
            dim: features.ncols(),
            gamma: config.gamma,
            points: Vec::new(),
            weights: Vec::new(),
        };
        Ok(Self {
            config,
            features,
            labels: label_values(labels),
            alpha: vec![0.0; n],
            hypothesis: vec![0.0; n],
            cache,
            predictor,
            report: None,
        })
    }

    /// Model with the given weights; the hypothesis is computed from scratch.
    pub fn from_weights(
        features: Array2<f64>,
        labels: &[CollisionLabel],
        alpha: Vec<f64>,
        config: FastronConfig,
    ) -> Result<Self> {
        let mut model = Self::empty(features, labels, config)?;
        if alpha.len() != model.len() {
            return Err(Error::DimensionMismatch {
                context: "fastron weights",
                expected: model.len(),
                got: alpha.len(),
            });
        }
        model.alpha = alpha;
        model.hypothesis = model.recompute_hypothesis();
        model.predictor = FastronPredictor::from_model(&model);
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn hypothesis(&self) -> &[f64] {
        &self.hypothesis
    }

    pub fn support_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a != 0.0).count()
    }

    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.alpha[i] != 0.0).collect()
    }

    pub fn cached_columns(&self) -> usize {
        self.cache.len()
    }

    pub fn report(&self) -> Option<&FastronReport> {
        self.report.as_ref()
    }

    pub fn termination(&self) -> Option<Termination> {
        self.report.as_ref().map(|r| r.termination)
    }

    pub fn margins(&self) -> Vec<f64> {
        self.labels.iter().zip(&self.hypothesis).map(|(y, f)| y * f).collect()
    }

    fn compute_column(&self, i: usize) -> Vec<f64> {
        let xi = self.features.row(i);
        let xi = xi.as_slice().expect("features are contiguous");
        let gamma = self.config.gamma;
        (0..self.len())
            .into_par_iter()
            .map(|j| {
                let xj = self.features.row(j);
                kernel(xj.as_slice().expect("features are contiguous"), xi, gamma)
            })
            .collect()
    }

    fn column(&mut self, i: usize) -> Arc<Vec<f64>> {
        if let Some(col) = self.cache.columns.get(&i) {
            return Arc::clone(col);
        }
        let col = self.compute_column(i);
        self.cache.get_or_insert(i, || col)
    }

    /// `K · α` evaluated from scratch.
    pub fn recompute_hypothesis(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.len()];
        for i in 0..self.len() {
            let a = self.alpha[i];
            if a != 0.0 {
                for (fj, k) in f.iter_mut().zip(self.compute_column(i)) {
                    *fj += a * k;
                }
            }
        }
        f
    }

    fn apply(&mut self, i: usize, delta: f64) {
        let col = self.column(i);
        self.alpha[i] += delta;
        for (f, k) in self.hypothesis.iter_mut().zip(col.iter()) {
            *f += delta * k;
        }
    }

    /// Removes support points whose exclusion margin is positive.
    ///
    /// Candidates are taken largest exclusion margin first. A removal is only
    /// applied when every training margin stays positive, so a converged
    /// model remains converged. Returns the number of points removed.
    pub fn remove_redundant_supports(&mut self) -> usize {
        let mut rejected = vec![false; self.len()];
        let mut removed = 0;
        loop {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.len() {
                let a = self.alpha[i];
                if a == 0.0 || rejected[i] {
                    continue;
                }
                let v = self.labels[i] * (self.hypothesis[i] - a);
                if v > 0.0 && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
            let Some((k, _)) = best else { break };
            let a = self.alpha[k];
            let col = self.column(k);
            let was_separated = self.margins().iter().all(|&m| m > 0.0);
            let keeps_margins = !was_separated
                || self
                    .labels
                    .iter()
                    .zip(&self.hypothesis)
                    .zip(col.iter())
                    .all(|((y, f), c)| y * (f - a * c) > 0.0);
            if keeps_margins {
                for (f, c) in self.hypothesis.iter_mut().zip(col.iter()) {
                    *f -= a * c;
                }
                self.alpha[k] = 0.0;
                removed += 1;
            } else {
                rejected[k] = true;
            }
        }
        if removed > 0 {
            self.predictor = FastronPredictor::from_model(self);
        }
        removed
    }

    pub fn predictor(&self) -> &FastronPredictor<f64> {
        &self.predictor
    }

    pub fn scores(&self, queries: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.predictor.scores(queries)
    }

    pub fn predict(&self, queries: ArrayView2<'_, f64>) -> Result<(Vec<CollisionLabel>, Vec<f64>)> {
        if self.report.is_none() {
            return Err(Error::RejectedState("fastron model has not been trained".into()));
        }
        let scores = self.scores(queries)?;
        Ok((scores.iter().map(|&s| CollisionLabel::from_score(s)).collect(), scores))
    }

    pub fn to_file(&self, env_ref: Option<String>) -> FastronFile {
        FastronFile {
            format_version: FASTRON_FORMAT_VERSION,
            tool_version: crate::TOOL_VERSION.to_string(),
            model: MODEL_TAG.to_string(),
            config: self.config.clone(),
            dim: self.dim(),
            features: self.features.iter().copied().collect(),
            labels: self.labels.iter().map(|&y| y as i8).collect(),
            alpha: self
                .alpha
                .iter()
                .enumerate()
                .filter(|(_, &a)| a != 0.0)
                .map(|(i, &a)| (i, a))
                .collect(),
            hypothesis: self.hypothesis.clone(),
            report: self.report.clone(),
            env_ref,
        }
    }

    pub fn from_file(file: FastronFile) -> Result<Self> {
        if file.model != MODEL_TAG {
            return Err(Error::Format(format!("file holds a '{}' model", file.model)));
        }
        if file.format_version != FASTRON_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported fastron format version {}",
                file.format_version
            )));
        }
        let n = file.labels.len();
        let features = Array2::from_shape_vec((n, file.dim), file.features)
            .map_err(|_| Error::Format("feature matrix has the wrong length".into()))?;
        let labels = file
            .labels
            .iter()
            .map(|&y| CollisionLabel::from_value(y as i64))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| Error::Format("labels must be -1 or 1".into()))?;
        let mut model = Self::empty(features, &labels, file.config)?;
        for (i, a) in file.alpha {
            if i >= n {
                return Err(Error::Format(format!("support index {i} out of range")));
            }
            model.alpha[i] = a;
        }
        if file.hypothesis.len() != n {
            return Err(Error::Format("hypothesis has the wrong length".into()));
        }
        model.hypothesis = file.hypothesis;
        model.report = file.report;
        model.predictor = FastronPredictor::from_model(&model);
        Ok(model)
    }
}

/// On-disk form of a trained model with sparse weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastronFile {
    pub format_version: u32,
    pub tool_version: String,
    pub model: String,
    pub config: FastronConfig,
    pub dim: usize,
    /// Row-major `n × dim`.
    pub features: Vec<f64>,
    pub labels: Vec<i8>,
    pub alpha: Vec<(usize, f64)>,
    pub hypothesis: Vec<f64>,
    pub report: Option<FastronReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_ref: Option<String>,
}

/// Trains a model on FK features.
pub fn fastron_train(
    features: ArrayView2<'_, f64>,
    labels: &[CollisionLabel],
    config: &FastronConfig,
) -> Result<FastronModel> {
    let started = Instant::now();
    let mut model = FastronModel::empty(features.to_owned(), labels, config.clone())?;
    let n = model.len();
    let support_cap = config.max_support.min(n);
    let mut support = 0usize;
    let mut updates = 0usize;

    let termination = loop {
        let mut worst: Option<(usize, f64)> = None;
        let mut any_negative = false;
        for i in 0..n {
            let m = model.labels[i] * model.hypothesis[i];
            if m > 0.0 {
                continue;
            }
            any_negative = true;
            if model.alpha[i] == 0.0 && support >= support_cap {
                continue;
            }
            if worst.is_none_or(|(_, wm)| m < wm) {
                worst = Some((i, m));
            }
        }
        if !any_negative {
            break Termination::Converged;
        }
        if updates >= config.max_updates {
            break Termination::IterationCap;
        }
        let Some((i, _)) = worst else {
            break Termination::SupportCapBlocked;
        };
        let y = model.labels[i];
        let target = if y > 0.0 { config.beta } else { 1.0 };
        let delta = target * y - model.hypothesis[i];
        let was_support = model.alpha[i] != 0.0;
        model.apply(i, delta);
        let is_support = model.alpha[i] != 0.0;
        match (was_support, is_support) {
            (false, true) => support += 1,
            (true, false) => support -= 1,
            _ => {}
        }
        updates += 1;
    };

    let removed = if termination == Termination::Converged {
        model.remove_redundant_supports()
    } else {
        0
    };
    model.predictor = FastronPredictor::from_model(&model);
    model.report = Some(FastronReport {
        termination,
        updates,
        support_count: model.support_count(),
        removed,
        train_seconds: started.elapsed().as_secs_f64(),
    });
    log::debug!(
        "fastron: {termination} after {updates} updates, {} supports ({removed} removed)",
        model.support_count()
    );
    Ok(model)
}
