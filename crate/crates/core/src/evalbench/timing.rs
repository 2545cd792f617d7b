use std::hint::black_box;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_WARMUP: usize = 3;
pub const DEFAULT_REPEATS: usize = 5;
pub const MIN_REPEATS: usize = 3;

/// Held for the duration of every timed measurement so that concurrent
/// sweep workers never time at the same moment.
pub static TIMING_LOCK: Mutex<()> = Mutex::new(());

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub train_seconds: f64,
    pub per_inference_mean: f64,
    pub per_inference_std: f64,
    pub per_inference_median: f64,
    pub query_count: usize,
    pub warmup_count: usize,
    pub repeat_count: usize,
    pub thread_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Smallest nonzero step of the monotonic clock observed over a few samples.
pub fn clock_resolution() -> Duration {
    static RES: OnceLock<Duration> = OnceLock::new();
    *RES.get_or_init(|| {
        let mut best = Duration::MAX;
        for _ in 0..200 {
            let start = Instant::now();
            let mut now = Instant::now();
            while now == start {
                now = Instant::now();
            }
            best = best.min(now - start);
        }
        best
    })
}

/// Times `predict` over a full query batch.
///
/// `predict` is called `warmup` times unclocked, then `repeats` times with
/// the clock running; per-inference figures divide each batch time by
/// `query_count`. The caller is responsible for keeping `predict`
/// single-threaded.
pub fn time_inference<T>(
    query_count: usize,
    warmup: usize,
    repeats: usize,
    mut predict: impl FnMut() -> Result<T>,
) -> Result<TimingReport> {
    if query_count == 0 {
        return Err(Error::InvalidInput("cannot time an empty query batch".into()));
    }
    if repeats < MIN_REPEATS {
        return Err(Error::InvalidInput(format!(
            "timing needs at least {MIN_REPEATS} repeats, got {repeats}"
        )));
    }
    let resolution = clock_resolution();
    let _guard = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    for _ in 0..warmup {
        black_box(predict()?);
    }
    let mut batch = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        black_box(predict()?);
        batch.push(start.elapsed());
    }
    drop(_guard);

    let per: Vec<f64> = batch
        .iter()
        .map(|d| d.as_secs_f64() / query_count as f64)
        .collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (per.len() - 1) as f64;
    let mut sorted = per.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let shortest = batch.iter().min().copied().unwrap_or_default();
    let warning = (resolution.as_secs_f64() > 0.01 * shortest.as_secs_f64()).then(|| {
        format!(
            "clock resolution {:?} exceeds 1% of the shortest measured batch {:?}",
            resolution, shortest
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(TimingReport {
        train_seconds: 0.0,
        per_inference_mean: mean,
        per_inference_std: var.sqrt(),
        per_inference_median: median,
        query_count,
        warmup_count: warmup,
        repeat_count: repeats,
        thread_count: 1,
        warning,
    })
}
