//! Task streams and their evaluation.
//!
//! A stream is an ordered list of tasks. The runner first measures every task
//! on its own, then for each task in turn emits the stage datasets (current
//! data plus earlier memories), lets the learner hook act on them, builds the
//! task's memories and evaluates all tasks seen so far.

mod config;
mod data;
mod eval;
mod metrics;
mod run;
mod stage;

use thiserror::Error;

pub use config::{
    BackendConfig, LearnerHook, MemoryConfig, OracleSettings, OracleWindow, RoleSpec, RunConfig, SynthesisSettings,
};
pub use data::{read_samples, Example, Limits, Rejected, Sample, Task, TaskMeta, TaskSchema};
pub use eval::{accuracy, infer, is_correct, normalize, oracle_key, AccuracyMode, Prediction};
pub use metrics::{compute_metrics, pct, render_csv, render_text, AccuracyMatrix, Metrics};
pub use run::{
    build_memory, check_heterogeneity, oracle_entries, run_stream, MemorySummary, MetricsReport, RunManifest, RunMeta,
    Runner, TaskInfo,
};
pub use stage::{assemble_stage_dataset, current_stage_rows, Stage, StageDataset, StageRow};

use crate::backend::BackendError;
use crate::exec::StoreError;
use crate::memory::MemoryError;
use crate::schema::SchemaError;
use crate::synthesis::SynthesisError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("unknown schema `{0}`")]
    UnknownSchema(String),
    #[error("no memory bank for task {0}")]
    MissingMemory(usize),
    #[error("accuracy matrix lacks acc({task}, {after})")]
    IncompleteMatrix { task: usize, after: usize },
    #[error("learner hook failed: {0}")]
    Learner(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}
