//! Execution policies mapping ready workflow tasks onto pods: one job per
//! task, clustered jobs (same-type batches executed sequentially in one
//! pod), and per-type worker pools fed by FIFO queues.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cluster::{PodIdx, PoolIdx};
use crate::error::ConfigError;
use crate::workflow::TaskIdx;

/// Horizontal clustering rule, in the wire shape used by workflow config
/// files: `{"matchTask": [...], "size": N, "timeoutMs": M}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ClusteringRule {
    #[serde(rename = "matchTask")]
    pub match_task: Vec<String>,
    pub size: usize,
    #[serde(rename = "timeoutMs", default)]
    pub timeout_ms: u64,
}

/// A same-type batch bound for one pod.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub tasks: Vec<TaskIdx>,
    pub type_idx: usize,
    pub formation_time_ms: u64,
}

/// Worker-pool shape for one task type.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    #[serde(rename = "type")]
    pub task_type: String,
    pub cpu_m: u64,
    pub mem_mb: u64,
    /// Worker pod creation overhead; falls back to the cluster-wide value.
    #[serde(default)]
    pub overhead_ms: Option<u64>,
    #[serde(default)]
    pub min: u64,
    /// Unbounded when absent; capacity clamps it anyway.
    #[serde(default)]
    pub max: Option<u64>,
    /// Modeled broker latency between dequeue and task start.
    #[serde(default)]
    pub dequeue_latency_ms: u64,
}

/// Default policy for task types not matched by any rule or pool.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DefaultMode {
    #[default]
    Job,
    /// Unmatched types are a configuration error.
    None,
}

/// Per-type execution policy selection: clustering rules, pool specs, and
/// the default for everything else.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutionModelConfig {
    #[serde(rename = "defaultMode")]
    pub default_mode: DefaultMode,
    pub clustering: Vec<ClusteringRule>,
    pub pools: Vec<PoolSpec>,
}

/// The mode a concrete task type resolved to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedMode {
    Job,
    ClusteredJob(usize),
    WorkerPool(PoolIdx),
}

impl ExecutionModelConfig {
    /// Structural checks with config-file field paths.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (i, rule) in self.clustering.iter().enumerate() {
            if rule.size < 1 {
                return Err(ConfigError::new(
                    format!("model.clustering[{i}].size"),
                    "must be >= 1",
                ));
            }
            if rule.match_task.is_empty() {
                return Err(ConfigError::new(
                    format!("model.clustering[{i}].matchTask"),
                    "must list at least one task type",
                ));
            }
        }
        for (i, pool) in self.pools.iter().enumerate() {
            if pool.cpu_m == 0 || pool.mem_mb == 0 {
                return Err(ConfigError::new(
                    format!("model.pools[{i}]"),
                    "worker requests must be > 0",
                ));
            }
            if let Some(max) = pool.max {
                if pool.min > max {
                    return Err(ConfigError::new(
                        format!("model.pools[{i}].min"),
                        format!("min ({}) exceeds max ({max})", pool.min),
                    ));
                }
            }
        }
        // Exactly-one-mode: a type may appear in at most one rule or pool.
        let mut seen: HashMap<&str, String> = HashMap::new();
        for (i, rule) in self.clustering.iter().enumerate() {
            for ty in &rule.match_task {
                let here = format!("model.clustering[{i}]");
                if let Some(prev) = seen.insert(ty, here.clone()) {
                    return Err(ConfigError::new(
                        here,
                        format!("task type `{ty}` already matched by {prev}"),
                    ));
                }
            }
        }
        for (i, pool) in self.pools.iter().enumerate() {
            let here = format!("model.pools[{i}]");
            if let Some(prev) = seen.insert(&pool.task_type, here.clone()) {
                return Err(ConfigError::new(
                    here,
                    format!("task type `{}` already matched by {prev}", pool.task_type),
                ));
            }
        }
        Ok(())
    }

    /// Resolves the mode for one task type.
    pub fn resolve(&self, task_type: &str) -> Result<ResolvedMode, ConfigError> {
        for (i, rule) in self.clustering.iter().enumerate() {
            if rule.match_task.iter().any(|t| t == task_type) {
                return Ok(ResolvedMode::ClusteredJob(i));
            }
        }
        for (i, pool) in self.pools.iter().enumerate() {
            if pool.task_type == task_type {
                return Ok(ResolvedMode::WorkerPool(i));
            }
        }
        match self.default_mode {
            DefaultMode::Job => Ok(ResolvedMode::Job),
            DefaultMode::None => Err(ConfigError::new(
                "model.defaultMode",
                format!("no execution mode resolves task type `{task_type}`"),
            )),
        }
    }
}

/// What happened when a task was appended to a clustering buffer.
#[derive(Debug, PartialEq, Eq)]
pub enum BatchPush {
    /// The buffer reached the rule size; these tasks form a batch now.
    Emitted(Vec<TaskIdx>),
    /// Buffered. If the buffer just opened, a timeout must be armed for
    /// `(fire_at_ms, generation)`.
    Buffered { arm_timeout: Option<(u64, u64)> },
}

#[derive(Debug, Default)]
struct Buffer {
    tasks: Vec<TaskIdx>,
    generation: u64,
}

/// Open clustering buffers, one per (rule, task type) pair so batches stay
/// homogeneous even when one rule matches several types. The timeout clock
/// starts when a buffer opens and restarts when it empties.
#[derive(Debug, Default)]
pub struct BatchBuffers {
    buffers: HashMap<(usize, usize), Buffer>,
}

impl BatchBuffers {
    pub fn push(
        &mut self,
        rule_idx: usize,
        rule: &ClusteringRule,
        type_idx: usize,
        task: TaskIdx,
        now_ms: u64,
    ) -> BatchPush {
        let buf = self.buffers.entry((rule_idx, type_idx)).or_default();
        let opened = buf.tasks.is_empty();
        buf.tasks.push(task);
        if buf.tasks.len() >= rule.size {
            buf.generation += 1;
            return BatchPush::Emitted(std::mem::take(&mut buf.tasks));
        }
        BatchPush::Buffered {
            arm_timeout: opened.then(|| (now_ms + rule.timeout_ms, buf.generation)),
        }
    }

    /// Fires a timeout. Returns the partial batch if the buffer is still on
    /// the same generation and non-empty; stale timeouts return `None`.
    pub fn flush_timeout(
        &mut self,
        rule_idx: usize,
        type_idx: usize,
        generation: u64,
    ) -> Option<Vec<TaskIdx>> {
        let buf = self.buffers.get_mut(&(rule_idx, type_idx))?;
        if buf.generation != generation || buf.tasks.is_empty() {
            return None;
        }
        buf.generation += 1;
        Some(std::mem::take(&mut buf.tasks))
    }

    /// Task count currently buffered across all rules.
    pub fn buffered_count(&self) -> usize {
        self.buffers.values().map(|b| b.tasks.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WorkerPhase {
    /// Submitted but not yet running its loop.
    Starting,
    Idle,
    Busy(TaskIdx),
}

#[derive(Debug)]
struct WorkerEntry {
    pod: PodIdx,
    phase: WorkerPhase,
    drain: bool,
    dead: bool,
}

/// Outcome of a worker asking for its next piece of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerAction {
    /// Marked for scale-down; terminate now (the current task, if any,
    /// already finished).
    Terminate,
    Assign(TaskIdx),
    Idle,
}

/// Scale-down selection: cancel workers that never started, remove idle
/// ones, drain busy ones.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct ScaleDownPlan {
    pub cancel: Vec<PodIdx>,
    pub remove_idle: Vec<PodIdx>,
    pub drain: Vec<PodIdx>,
}

/// Live state of one worker pool: its FIFO queue and its workers in
/// creation order.
#[derive(Debug)]
pub struct PoolState {
    pub type_idx: usize,
    queue: VecDeque<TaskIdx>,
    entries: Vec<WorkerEntry>,
    by_pod: HashMap<PodIdx, usize>,
    poisoned: bool,
}

impl PoolState {
    pub fn new(type_idx: usize) -> Self {
        Self {
            type_idx,
            queue: VecDeque::new(),
            entries: Vec::new(),
            by_pod: HashMap::new(),
            poisoned: false,
        }
    }

    /// Enqueues a ready task. If an idle worker exists the task is handed
    /// to it immediately (the queue is necessarily empty then) and the
    /// worker's pod is returned.
    pub fn enqueue(&mut self, task: TaskIdx) -> Option<PodIdx> {
        let idle = self
            .entries
            .iter_mut()
            .find(|e| !e.dead && !e.drain && e.phase == WorkerPhase::Idle);
        if let Some(entry) = idle {
            debug_assert!(self.queue.is_empty(), "idle worker with non-empty queue");
            entry.phase = WorkerPhase::Busy(task);
            return Some(entry.pod);
        }
        self.queue.push_back(task);
        None
    }

    /// Registers a freshly submitted worker pod.
    pub fn add_worker(&mut self, pod: PodIdx) {
        self.by_pod.insert(pod, self.entries.len());
        self.entries.push(WorkerEntry {
            pod,
            phase: WorkerPhase::Starting,
            drain: false,
            dead: false,
        });
    }

    /// The worker is ready for work: first wake-up after creation, or just
    /// finished a task. FIFO dequeue; drain marks win over new work.
    pub fn next_action(&mut self, pod: PodIdx) -> WorkerAction {
        let idx = self.by_pod[&pod];
        let entry = &mut self.entries[idx];
        if entry.dead {
            return WorkerAction::Terminate;
        }
        if entry.drain {
            entry.dead = true;
            return WorkerAction::Terminate;
        }
        match self.queue.pop_front() {
            Some(task) => {
                entry.phase = WorkerPhase::Busy(task);
                WorkerAction::Assign(task)
            }
            None => {
                entry.phase = WorkerPhase::Idle;
                WorkerAction::Idle
            }
        }
    }

    /// A worker pod turned out unschedulable; stop feeding this pool.
    pub fn on_unschedulable(&mut self, pod: PodIdx) {
        let idx = self.by_pod[&pod];
        self.entries[idx].dead = true;
        self.poisoned = true;
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn queue_len(&self) -> u64 {
        self.queue.len() as u64
    }

    /// Workers currently executing a task, excluding draining ones.
    pub fn busy_workers(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| !e.dead && !e.drain && matches!(e.phase, WorkerPhase::Busy(_)))
            .count() as u64
    }

    /// Live replicas: starting, idle or busy, excluding draining ones.
    pub fn current_replicas(&self) -> u64 {
        self.entries.iter().filter(|e| !e.dead && !e.drain).count() as u64
    }

    /// Picks `count` workers to shed, newest first within each class:
    /// not-yet-started, then idle, then busy (graceful drain). Marks them
    /// internally; the caller terminates the pods.
    pub fn plan_scale_down(&mut self, count: u64) -> ScaleDownPlan {
        let mut plan = ScaleDownPlan::default();
        let mut left = count;
        for phase in [WorkerPhase::Starting, WorkerPhase::Idle] {
            for i in (0..self.entries.len()).rev() {
                if left == 0 {
                    break;
                }
                let e = &mut self.entries[i];
                if !e.dead && !e.drain && e.phase == phase {
                    e.dead = true;
                    left -= 1;
                    match phase {
                        WorkerPhase::Starting => plan.cancel.push(e.pod),
                        _ => plan.remove_idle.push(e.pod),
                    }
                }
            }
        }
        for i in (0..self.entries.len()).rev() {
            if left == 0 {
                break;
            }
            let e = &mut self.entries[i];
            if !e.dead && !e.drain && matches!(e.phase, WorkerPhase::Busy(_)) {
                e.drain = true;
                left -= 1;
                plan.drain.push(e.pod);
            }
        }
        plan
    }
}
