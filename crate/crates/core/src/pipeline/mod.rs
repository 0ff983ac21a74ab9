//! The cycle loop: schedule a batch, detect, range, describe, speak.

mod config;
mod metrics;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::scheduler::ScheduleError;

pub use config::{
    load_config, DistanceConfig, PerceptionConfig, PipelineConfig, SourceConfig, TtsConfig, DEFAULT_FOCAL_LENGTH_PX,
};
pub use metrics::{percentile, CycleMetrics, MetricsWriter};
pub use run::{
    open_source, run_cycle, CycleDeps, CycleReport, DroppedCycle, NoopObserver, Pipeline, RunObserver, RunSummary,
    StopReason,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("config key `{key}`: {message}")]
    SchemaViolation { key: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("initialization failed: {0}")]
    InitializationError(String),
    #[error("every detect call in the cycle failed")]
    AllFramesFailed,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}
