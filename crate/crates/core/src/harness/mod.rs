//! Experiment runner: schedules, the step-size grid, the epoch loop, metric
//! collection and persistence. Everything here works in `f64`.

pub mod compare;
pub mod config;
pub mod grid;
pub mod gradcheck;
pub mod record;
pub mod runner;
pub mod schedule;

pub use compare::{compare, sanitize_label, write_records, ComparisonEntry, ComparisonTable, FinalMetrics, COMPARISON_HEADER};
pub use config::{
    is_known_key, load_config, parse_config, ExperimentConfig, ExperimentSetup, ModelSpec, Override,
    ProblemConfig, ProblemSpec, KNOWN_KEYS,
};
pub use gradcheck::{gradcheck, GradcheckReport, GRADCHECK_STEP, GRADCHECK_TOLERANCE};
pub use grid::{grid_search, search, tune, Direction, GridMetric, GridOutcome, GridPoint, GridResult, GridSpec};
pub use record::{format_sig, EpochRow, RunRecord, METRIC_COLUMNS, RECORD_HEADER};
pub use runner::run_experiment;
pub use schedule::{schedule_eta, Schedule, ScheduleKind};
