//! Metrics, timing, Pareto extraction and the experiment sweeps.

mod metrics;
mod pareto;
mod runner;
mod sweep;
mod timing;

pub use metrics::{
    compute_metrics, dummy_baselines, identities_hold, ConfusionCounts, DummyBaselines, Metrics,
};
pub use pareto::{pareto_frontier, pareto_points};
pub use runner::{evaluate, train_model, Evaluation, ModelSpec, Precision, TrainedModel};
pub use sweep::{
    deepcollide_default, deepcollide_preset, environment_seed, fastron_default, fastron_preset,
    run_sweep, write_results_csv, CellFailure, SweepAxis, SweepOutcome, SweepProtocol, SweepResult,
    SweepSpec, JOINTS_PER_ROBOT, SAMPLE_SIZE_AXIS_CAP,
};
pub use timing::{
    clock_resolution, time_inference, TimingReport, DEFAULT_REPEATS, DEFAULT_WARMUP, MIN_REPEATS,
    TIMING_LOCK,
};
