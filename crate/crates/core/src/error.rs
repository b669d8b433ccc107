//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while loading, validating or generating workflow DAGs.
#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("failed to parse workflow: {0}")]
    Parse(String),
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("task `{task}` references unknown parent `{parent}`")]
    DanglingParent { task: String, parent: String },
    #[error("dependency cycle detected involving task `{0}`")]
    Cycle(String),
    #[error("task `{task}`: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("unknown task id `{0}`")]
    UnknownTask(String),
    #[error("montage generator requires n_inputs >= 4, got {0}")]
    TooFewInputs(u64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by the modeled cluster data plane.
#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("duplicate pod id `{0}`")]
    DuplicatePodId(String),
    #[error("pod `{pod}` is not running (state: {state})")]
    NotRunning { pod: String, state: String },
    #[error("unknown pod id `{0}`")]
    UnknownPod(String),
}

/// Configuration validation errors. `path` points at the offending field
/// using dotted/indexed notation, e.g. `scaler.pools[0].cpu_m`.
#[derive(Debug, Error)]
#[error("{path}: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { path: path.into(), reason: reason.into() }
    }
}

/// A task the simulator could not drive to completion, with a description
/// of where it was stuck when the event queue drained.
#[derive(Debug, Clone)]
pub struct StuckTask {
    pub task_id: String,
    pub state: String,
}

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation deadlock: {} task(s) stuck; first: {}",
            .stuck.len(),
            .stuck.first().map(|s| format!("{} ({})", s.task_id, s.state)).unwrap_or_default())]
    Deadlock { stuck: Vec<StuckTask> },
    #[error("simulated time exceeded the {limit_ms} ms guard with {incomplete} task(s) incomplete")]
    MaxSimTimeExceeded { limit_ms: u64, incomplete: usize },
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace is incomplete: {0}")]
    IncompleteTrace(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
