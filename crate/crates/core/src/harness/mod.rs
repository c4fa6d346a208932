//! Experiment harness: scenarios and presets, closed-loop runs, metrics and
//! file output.

pub mod metrics;
pub mod runner;
pub mod scenario;
pub mod svg;

pub use metrics::{
    compute_metrics, final_path, final_period, hausdorff_distance, parse_csv, settling_time, straightness, CsvRow,
    MetricContext, RunMetrics,
};
pub use runner::{
    build_controller, matched_mode, metrics_from_rows, recompute_metrics, run, sweep, RunOptions, RunOutcome,
    RunReport,
};
pub use scenario::{preset, with_param, InitialState, Scenario, VariantKind, PRESET_NAMES, TORQUE_LIMIT};
