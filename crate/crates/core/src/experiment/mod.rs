//! Experiment configuration, artifact layout and the end-to-end pipeline.

mod config;
mod log;
mod run;

pub use self::config::{DataConfig, EvalConfig, ExperimentConfig, ModelShape, PoolConfig, ScheduleConfig};
pub use self::log::{read_log, scores, LogPayload, MetricsLog, MetricsLogRecord, SCHEMA_VERSION};
pub use self::run::{
    checkpoint_path, gen_data, init_dir, member_name, report, run_experiment, run_stage, Experiment, Selection, Stage,
    StageMarker, StageStatus, CONFIG_FILE, METRICS_FILE, SELECTION_FILE, STAGE_FILE, SUMMARY_FILE,
};
