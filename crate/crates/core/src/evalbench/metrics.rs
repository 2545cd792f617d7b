use serde::{Deserialize, Serialize};

use crate::geometry::CollisionLabel;
use crate::{Error, Result};

/// Confusion counts with collisions as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn from_labels(predicted: &[CollisionLabel], truth: &[CollisionLabel]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                context: "predicted vs true labels",
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let mut c = Self::default();
        for (p, t) in predicted.iter().zip(truth) {
            match (p.is_collision(), t.is_collision()) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Ratios are `None` when their denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: &ConfusionCounts) -> Metrics {
    let m = Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        tpr: ratio(c.tp, c.tp + c.fn_),
        tnr: ratio(c.tn, c.tn + c.fp),
    };
    debug_assert!(identities_hold(c, &m, 1e-12));
    m
}

/// Checks `tpr + fnr = 1` and that accuracy is the prevalence-weighted mix of
/// `tpr` and `tnr`.
pub fn identities_hold(c: &ConfusionCounts, m: &Metrics, tol: f64) -> bool {
    let total = c.total();
    if total == 0 {
        return m.accuracy.is_none();
    }
    let pos = c.tp + c.fn_;
    if let Some(tpr) = m.tpr {
        if (tpr + c.fn_ as f64 / pos as f64 - 1.0).abs() > tol {
            return false;
        }
    }
    let p = pos as f64 / total as f64;
    let mixed = p * m.tpr.unwrap_or(0.0) + (1.0 - p) * m.tnr.unwrap_or(0.0);
    m.accuracy.is_some_and(|a| (a - mixed).abs() <= tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DummyBaselines {
    pub majority_accuracy: f64,
    /// Expected rates of guessing collision with probability equal to the
    /// collision fraction.
    pub chance_tpr: f64,
    pub chance_tnr: f64,
}

pub fn dummy_baselines(labels: &[CollisionLabel]) -> Result<DummyBaselines> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("baselines need at least one label".into()));
    }
    let p = labels.iter().filter(|l| l.is_collision()).count() as f64 / labels.len() as f64;
    Ok(DummyBaselines {
        majority_accuracy: p.max(1.0 - p),
        chance_tpr: p,
        chance_tnr: 1.0 - p,
    })
}
