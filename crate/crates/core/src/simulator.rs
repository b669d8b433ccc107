//! Deterministic discrete-event engine tying workflow, cluster, execution
//! models and autoscaler together.
//!
//! Events are processed in `(time_ms, seq)` order, where `seq` is the push
//! order; simultaneous events therefore replay identically on every run
//! and every host. All state mutation happens on this single logical
//! thread.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autoscaler::{self, PoolCaps, PoolMetrics, ScalerConfig, StabilizationWindow};
use crate::cluster::{
    ClusterConfig, ClusterState, PlacementOutcome, PodIdx, PodPayload, PodPhase, PodSpec,
};
use crate::error::{ConfigError, SimError, StuckTask};
use crate::execmodels::{
    BatchBuffers, BatchPush, ClusteringRule, ExecutionModelConfig, PoolSpec, PoolState,
    ResolvedMode, WorkerAction,
};
use crate::metrics::{self, Detail, StageStats, TraceEvent, TraceKind};
use crate::workflow::{TaskIdx, WorkflowDag};

/// How much of the lifecycle to record.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TraceVerbosity {
    /// Task, pod, batch and scaling events.
    #[default]
    Full,
    /// Task lifecycle only; small traces for very large runs.
    Tasks,
}

/// A complete scenario: workload, cluster shape, execution policy, scaler.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub name: String,
    pub workflow: Arc<WorkflowDag>,
    pub cluster: ClusterConfig,
    pub model: ExecutionModelConfig,
    pub scaler: ScalerConfig,
    pub seed: u64,
    /// Modeled engine dispatch latency between a completion and its
    /// children's readiness.
    pub engine_latency_ms: u64,
    /// Runaway guard: the run fails rather than simulating past this.
    pub max_sim_time_ms: u64,
    pub trace: TraceVerbosity,
}

impl SimConfig {
    pub fn new(name: impl Into<String>, workflow: Arc<WorkflowDag>) -> Self {
        Self {
            name: name.into(),
            workflow,
            cluster: ClusterConfig::default(),
            model: ExecutionModelConfig::default(),
            scaler: ScalerConfig::default(),
            seed: 0,
            engine_latency_ms: 0,
            max_sim_time_ms: 86_400_000,
            trace: TraceVerbosity::Full,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cluster.nodes.count == 0 {
            return Err(ConfigError::new("cluster.nodes.count", "must be >= 1"));
        }
        if self.cluster.nodes.cpu_m == 0 || self.cluster.nodes.mem_mb == 0 {
            return Err(ConfigError::new("cluster.nodes", "capacities must be > 0"));
        }
        let b = &self.cluster.backoff;
        if b.initial_ms == 0 {
            return Err(ConfigError::new("cluster.backoff.initial_ms", "must be > 0"));
        }
        if b.factor < 1 {
            return Err(ConfigError::new("cluster.backoff.factor", "must be >= 1"));
        }
        if b.cap_ms < b.initial_ms {
            return Err(ConfigError::new("cluster.backoff.cap_ms", "must be >= initial_ms"));
        }
        let a = &self.cluster.admission;
        if a.rate_per_s == 0 || a.burst == 0 {
            return Err(ConfigError::new("cluster.admission", "rate_per_s and burst must be >= 1"));
        }
        if self.scaler.interval_ms == 0 {
            return Err(ConfigError::new("scaler.interval_ms", "must be > 0"));
        }
        for (i, pool) in self.model.pools.iter().enumerate() {
            if pool.cpu_m > self.cluster.nodes.cpu_m || pool.mem_mb > self.cluster.nodes.mem_mb {
                return Err(ConfigError::new(
                    format!("scaler.pools[{i}]"),
                    format!(
                        "worker requests ({}m/{}MB) exceed node capacity ({}m/{}MB)",
                        pool.cpu_m, pool.mem_mb, self.cluster.nodes.cpu_m, self.cluster.nodes.mem_mb
                    ),
                ));
            }
        }
        self.model.validate()?;
        for ty in self.workflow.task_types() {
            self.model.resolve(&ty)?;
        }
        Ok(())
    }
}

/// Outcome audit: exactly-once execution and invariant flags.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct AuditReport {
    pub tasks_total: usize,
    pub tasks_completed: usize,
    pub executed_exactly_once: bool,
    pub allocation_within_capacity: bool,
    pub causality_ok: bool,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.tasks_total == self.tasks_completed
            && self.executed_exactly_once
            && self.allocation_within_capacity
            && self.causality_ok
    }
}

/// Result of one simulated scenario.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub name: String,
    pub makespan_ms: u64,
    pub trace: Vec<TraceEvent>,
    pub stages: Vec<StageStats>,
    pub audit: AuditReport,
    /// How many modal-request tasks fit the cluster at once.
    pub slot_capacity: u64,
    pub total_cpu_m: u64,
    pub tasks_total: usize,
}

/// Serializable digest of a run; the `json` export format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultSummary {
    pub name: String,
    pub makespan_ms: u64,
    pub tasks_total: usize,
    pub slot_capacity: u64,
    pub total_cpu_m: u64,
    pub mean_running: f64,
    pub max_running: u32,
    pub trace_hash: String,
    pub stalls_60s: Vec<(u64, u64)>,
    pub stages: Vec<StageStats>,
    pub audit: AuditReport,
}

impl SimResult {
    pub fn trace_hash(&self) -> String {
        metrics::trace_hash(&self.trace)
    }

    pub fn summary(&self) -> ResultSummary {
        ResultSummary {
            name: self.name.clone(),
            makespan_ms: self.makespan_ms,
            tasks_total: self.tasks_total,
            slot_capacity: self.slot_capacity,
            total_cpu_m: self.total_cpu_m,
            mean_running: self.mean_running(),
            max_running: self.max_running(),
            trace_hash: self.trace_hash(),
            stalls_60s: self.stall_intervals(60_000),
            stages: self.stages.clone(),
            audit: self.audit.clone(),
        }
    }

    /// Writes one artifact. CSV and JSON outputs are byte-stable for a
    /// fixed result.
    pub fn export(
        &self,
        format: metrics::ExportFormat,
        path: impl AsRef<std::path::Path>,
    ) -> Result<(), SimError> {
        use metrics::ExportFormat;
        let content = match format {
            ExportFormat::Csv => metrics::to_csv(&self.trace),
            ExportFormat::Json => {
                let mut s = serde_json::to_string_pretty(&self.summary())
                    .expect("summary serializes");
                s.push('\n');
                s
            }
            ExportFormat::GanttImage => {
                metrics::charts::gantt_svg(&self.trace, &self.name, self.slot_capacity as u32)
            }
            ExportFormat::UtilizationImage => metrics::charts::utilization_svg(
                &self.trace,
                &self.name,
                self.slot_capacity as u32,
            ),
        };
        std::fs::write(path, content)?;
        Ok(())
    }

    pub fn utilization_series(&self, step_ms: u64) -> Vec<metrics::UtilizationSample> {
        metrics::utilization_series(&self.trace, step_ms, self.total_cpu_m)
    }

    pub fn stall_intervals(&self, min_gap_ms: u64) -> Vec<(u64, u64)> {
        metrics::stall_intervals(&self.trace, min_gap_ms)
    }

    pub fn mean_running(&self) -> f64 {
        metrics::mean_running_over(&self.trace, 0, self.makespan_ms.max(1))
    }

    pub fn max_running(&self) -> u32 {
        metrics::max_running(&self.trace)
    }
}

/// Engine event kinds. `seq` ordering makes simultaneous events replay
/// deterministically.
#[derive(Debug, Clone, PartialEq, Eq)]
enum EventKind {
    TaskReady { task: TaskIdx },
    PodAdmitted { pod: PodIdx },
    SchedulePass,
    PodCreated { pod: PodIdx },
    TaskStarted { task: TaskIdx, pod: PodIdx },
    TaskCompleted { task: TaskIdx, pod: PodIdx },
    BatchTimeout { rule: usize, type_idx: usize, generation: u64 },
    PodCompleted { pod: PodIdx },
    ScalerTick,
    BackoffExpired { pod: PodIdx },
    WorkerIdle { pod: PodIdx },
}

#[derive(Debug, PartialEq, Eq)]
struct QueuedEvent {
    time_ms: u64,
    seq: u64,
    kind: EventKind,
}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest first.
        other
            .time_ms
            .cmp(&self.time_ms)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Where an incomplete task currently sits; reported on deadlock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Disposition {
    Blocked,
    Buffered { rule: usize },
    Queued { pool: usize },
    OnPod { pod: PodIdx },
    Running { pod: PodIdx },
    Done,
}

struct Engine {
    now: u64,
    seq: u64,
    heap: BinaryHeap<QueuedEvent>,
    non_tick_events: usize,

    dag: Arc<WorkflowDag>,
    type_names: Vec<Arc<str>>,
    task_type_idx: Vec<usize>,
    resolution: Vec<ResolvedMode>,
    task_ids: Vec<Arc<str>>,

    cluster: ClusterState,
    cluster_cfg: ClusterConfig,
    rules: Vec<ClusteringRule>,
    buffers: BatchBuffers,
    pool_specs: Vec<PoolSpec>,
    pools: Vec<PoolState>,
    pool_caps: Vec<PoolCaps>,
    windows: Vec<StabilizationWindow>,
    worker_seq: Vec<u64>,
    slot_cpu: u64,
    slot_mem: u64,
    scaler: ScalerConfig,

    remaining_parents: Vec<usize>,
    disposition: Vec<Disposition>,
    started: Vec<bool>,
    duplicate_start: bool,
    completed_count: usize,

    batch_pos: Vec<usize>,
    pod_seq: u64,
    pass_scheduled: Option<u64>,

    engine_latency_ms: u64,
    max_sim_time_ms: u64,
    verbosity: TraceVerbosity,
    trace: Vec<TraceEvent>,
}

impl Engine {
    fn new(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let dag = config.workflow.clone();
        let type_names: Vec<Arc<str>> =
            dag.task_types().into_iter().map(|t| Arc::from(t.as_str())).collect();
        let type_of = |ty: &str| type_names.iter().position(|t| t.as_ref() == ty).unwrap();
        let task_type_idx: Vec<usize> =
            dag.tasks().iter().map(|t| type_of(&t.task_type)).collect();
        let resolution: Vec<ResolvedMode> = type_names
            .iter()
            .map(|ty| config.model.resolve(ty).expect("validated above"))
            .collect();
        let task_ids: Vec<Arc<str>> =
            dag.tasks().iter().map(|t| Arc::from(t.id.as_str())).collect();
        let remaining_parents: Vec<usize> =
            (0..dag.len()).map(|i| dag.parent_idxs(i).len()).collect();

        let pool_specs = config.model.pools.clone();
        let pools: Vec<PoolState> = pool_specs
            .iter()
            .map(|p| {
                PoolState::new(
                    type_names
                        .iter()
                        .position(|t| t.as_ref() == p.task_type)
                        .unwrap_or(usize::MAX),
                )
            })
            .collect();
        let pool_caps: Vec<PoolCaps> =
            pool_specs.iter().map(|p| PoolCaps { min: p.min, max: p.max }).collect();
        let slot_cpu = pool_specs.iter().map(|p| p.cpu_m).max().unwrap_or(1);
        let slot_mem = pool_specs.iter().map(|p| p.mem_mb).max().unwrap_or(1);

        Ok(Self {
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            non_tick_events: 0,
            cluster: ClusterState::new(&config.cluster),
            cluster_cfg: config.cluster.clone(),
            rules: config.model.clustering.clone(),
            buffers: BatchBuffers::default(),
            windows: (0..pools.len()).map(|_| StabilizationWindow::default()).collect(),
            worker_seq: vec![0; pools.len()],
            pool_specs,
            pools,
            pool_caps,
            slot_cpu,
            slot_mem,
            scaler: config.scaler,
            disposition: vec![Disposition::Blocked; dag.len()],
            started: vec![false; dag.len()],
            duplicate_start: false,
            completed_count: 0,
            batch_pos: Vec::new(),
            pod_seq: 0,
            pass_scheduled: None,
            engine_latency_ms: config.engine_latency_ms,
            max_sim_time_ms: config.max_sim_time_ms,
            verbosity: config.trace,
            trace: Vec::new(),
            remaining_parents,
            task_type_idx,
            type_names,
            resolution,
            task_ids,
            dag,
        })
    }

    fn push(&mut self, time_ms: u64, kind: EventKind) {
        if !matches!(kind, EventKind::ScalerTick) {
            self.non_tick_events += 1;
        }
        self.heap.push(QueuedEvent { time_ms, seq: self.seq, kind });
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<QueuedEvent> {
        let ev = self.heap.pop()?;
        if !matches!(ev.kind, EventKind::ScalerTick) {
            self.non_tick_events -= 1;
        }
        Some(ev)
    }

    fn emit(&mut self, event: TraceEvent) {
        if self.verbosity == TraceVerbosity::Tasks
            && !matches!(
                event.kind,
                TraceKind::TaskReady | TraceKind::TaskStarted | TraceKind::TaskCompleted
            )
        {
            return;
        }
        self.trace.push(event);
    }

    fn emit_task(&mut self, kind: TraceKind, task: TaskIdx, pod: Option<PodIdx>) {
        let event = TraceEvent {
            time_ms: self.now,
            kind,
            task_id: Some(self.task_ids[task].clone()),
            pod_id: pod.map(|p| self.cluster.pod(p).spec.id.clone()),
            pool: Some(self.type_names[self.task_type_idx[task]].clone()),
            node: None,
            detail: None,
        };
        self.emit(event);
    }

    fn emit_pod(
        &mut self,
        kind: TraceKind,
        pod: PodIdx,
        node: Option<usize>,
        detail: Option<Detail>,
    ) {
        let pool = match self.cluster.pod(pod).spec.payload {
            PodPayload::Worker(p) => Some(self.pool_type_name(p)),
            _ => None,
        };
        let event = TraceEvent {
            time_ms: self.now,
            kind,
            task_id: None,
            pod_id: Some(self.cluster.pod(pod).spec.id.clone()),
            pool,
            node,
            detail,
        };
        self.emit(event);
    }

    fn pool_type_name(&self, pool: usize) -> Arc<str> {
        Arc::from(self.pool_specs[pool].task_type.as_str())
    }

    fn run(mut self) -> Result<SimResult, SimError> {
        for root in self.dag.roots() {
            self.push(0, EventKind::TaskReady { task: root });
        }
        if !self.pools.is_empty() {
            // A periodic timer armed at t=0 first fires after one interval.
            self.push(self.scaler.interval_ms, EventKind::ScalerTick);
        }

        let total = self.dag.len();
        let mut finish_at: Option<u64> = None;
        while let Some(ev) = self.pop() {
            if let Some(t) = finish_at {
                // Drain the completion instant, then stop.
                if ev.time_ms > t {
                    break;
                }
            }
            if ev.time_ms > self.max_sim_time_ms {
                return Err(SimError::MaxSimTimeExceeded {
                    limit_ms: self.max_sim_time_ms,
                    incomplete: total - self.completed_count,
                });
            }
            self.now = ev.time_ms;
            self.handle(ev.kind);
            if finish_at.is_none() && self.completed_count == total {
                finish_at = Some(self.now);
            }
        }

        if self.completed_count < total {
            return Err(self.deadlock_error());
        }
        Ok(self.into_result())
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::TaskReady { task } => self.on_task_ready(task),
            EventKind::PodAdmitted { pod } => self.on_pod_admitted(pod),
            EventKind::SchedulePass => self.on_schedule_pass(),
            EventKind::PodCreated { pod } => self.on_pod_created(pod),
            EventKind::TaskStarted { task, pod } => self.on_task_started(task, pod),
            EventKind::TaskCompleted { task, pod } => self.on_task_completed(task, pod),
            EventKind::BatchTimeout { rule, type_idx, generation } => {
                if let Some(tasks) = self.buffers.flush_timeout(rule, type_idx, generation) {
                    self.emit_batch(tasks);
                }
            }
            EventKind::PodCompleted { pod } => self.on_pod_completed(pod),
            EventKind::ScalerTick => self.on_scaler_tick(),
            EventKind::BackoffExpired { pod } => self.on_backoff_expired(pod),
            EventKind::WorkerIdle { pod } => self.on_worker_idle(pod),
        }
    }

    fn on_task_ready(&mut self, task: TaskIdx) {
        self.emit_task(TraceKind::TaskReady, task, None);
        let type_idx = self.task_type_idx[task];
        match self.resolution[type_idx] {
            ResolvedMode::Job => self.submit_task_pod(vec![task]),
            ResolvedMode::ClusteredJob(rule_idx) => {
                let rule = self.rules[rule_idx].clone();
                match self.buffers.push(rule_idx, &rule, type_idx, task, self.now) {
                    BatchPush::Emitted(tasks) => self.emit_batch(tasks),
                    BatchPush::Buffered { arm_timeout } => {
                        self.disposition[task] = Disposition::Buffered { rule: rule_idx };
                        if let Some((fire_at, generation)) = arm_timeout {
                            self.push(
                                fire_at,
                                EventKind::BatchTimeout { rule: rule_idx, type_idx, generation },
                            );
                        }
                    }
                }
            }
            ResolvedMode::WorkerPool(pool_idx) => {
                match self.pools[pool_idx].enqueue(task) {
                    Some(worker_pod) => self.start_worker_task(pool_idx, worker_pod, task),
                    None => self.disposition[task] = Disposition::Queued { pool: pool_idx },
                }
            }
        }
    }

    /// A batch of one dispatches exactly like a plain job, so that
    /// ClusteredJob(size=1) replays event-for-event as the Job model.
    fn emit_batch(&mut self, tasks: Vec<TaskIdx>) {
        debug_assert!(!tasks.is_empty());
        self.submit_task_pod(tasks);
    }

    fn submit_task_pod(&mut self, tasks: Vec<TaskIdx>) {
        let lead = self.dag.task(tasks[0]);
        let id: Arc<str> = Arc::from(format!("pod-{:06}", self.pod_seq).as_str());
        self.pod_seq += 1;
        let payload = if tasks.len() == 1 {
            PodPayload::Task(tasks[0])
        } else {
            PodPayload::Batch(tasks.clone())
        };
        let spec = PodSpec {
            id,
            cpu_request_millicores: lead.cpu_request_millicores,
            mem_request_mb: lead.mem_request_mb,
            creation_overhead_ms: self.cluster_cfg.pod_overhead_ms,
            payload,
        };
        let (pod, admit_at) =
            self.cluster.submit_pod(spec, self.now).expect("engine-generated ids are unique");
        self.batch_pos.resize(pod + 1, 0);
        if tasks.len() > 1 {
            self.emit_pod(
                TraceKind::BatchFormed,
                pod,
                None,
                Some(Detail::Batch { size: tasks.len() as u32 }),
            );
        }
        for &t in &tasks {
            self.disposition[t] = Disposition::OnPod { pod };
        }
        self.emit_pod(TraceKind::PodSubmitted, pod, None, None);
        self.push(admit_at, EventKind::PodAdmitted { pod });
    }

    fn submit_worker(&mut self, pool_idx: usize) {
        let spec = &self.pool_specs[pool_idx];
        let id: Arc<str> = Arc::from(
            format!("{}-w{:04}", spec.task_type, self.worker_seq[pool_idx]).as_str(),
        );
        self.worker_seq[pool_idx] += 1;
        let pod_spec = PodSpec {
            id,
            cpu_request_millicores: spec.cpu_m,
            mem_request_mb: spec.mem_mb,
            creation_overhead_ms: spec.overhead_ms.unwrap_or(self.cluster_cfg.pod_overhead_ms),
            payload: PodPayload::Worker(pool_idx),
        };
        let (pod, admit_at) =
            self.cluster.submit_pod(pod_spec, self.now).expect("engine-generated ids are unique");
        self.batch_pos.resize(pod + 1, 0);
        self.pools[pool_idx].add_worker(pod);
        self.emit_pod(TraceKind::PodSubmitted, pod, None, None);
        self.push(admit_at, EventKind::PodAdmitted { pod });
    }

    fn on_pod_admitted(&mut self, pod: PodIdx) {
        if self.cluster.pod(pod).phase != PodPhase::Submitted {
            return; // cancelled while waiting for admission
        }
        self.emit_pod(TraceKind::PodAdmitted, pod, None, None);
        self.attempt_place(pod);
    }

    fn attempt_place(&mut self, pod: PodIdx) {
        let before = match self.cluster.pod(pod).phase {
            PodPhase::Pending { attempts, next_eligible_ms } => Some((attempts, next_eligible_ms)),
            _ => None,
        };
        match self.cluster.try_place(pod, self.now) {
            PlacementOutcome::Placed { node, running_at_ms } => {
                let (cpu_m, mem_mb) = {
                    let s = &self.cluster.pod(pod).spec;
                    (s.cpu_request_millicores, s.mem_request_mb)
                };
                self.emit_pod(
                    TraceKind::PodScheduled,
                    pod,
                    Some(node),
                    Some(Detail::Requests { cpu_m, mem_mb }),
                );
                self.push(running_at_ms, EventKind::PodCreated { pod });
            }
            PlacementOutcome::Deferred { attempts, next_eligible_ms } => {
                // A same-timestamp retry that was absorbed changes nothing;
                // don't double-arm the wake-up.
                if before != Some((attempts, next_eligible_ms)) {
                    self.emit_pod(
                        TraceKind::PodPending,
                        pod,
                        None,
                        Some(Detail::Backoff { attempts, next_eligible_ms }),
                    );
                    self.push(next_eligible_ms, EventKind::BackoffExpired { pod });
                }
            }
            PlacementOutcome::Unschedulable => {
                self.emit_pod(TraceKind::PodUnschedulable, pod, None, None);
                if let PodPayload::Worker(pool_idx) = self.cluster.pod(pod).spec.payload {
                    self.pools[pool_idx].on_unschedulable(pod);
                }
            }
        }
    }

    fn on_backoff_expired(&mut self, pod: PodIdx) {
        // Back-off is a minimum wait: the wake-up places the pod if room
        // exists right now; otherwise the pod simply stays eligible for
        // the next release-driven pass, without a penalty.
        match self.cluster.pod(pod).phase {
            PodPhase::Pending { next_eligible_ms, .. } if next_eligible_ms <= self.now => {}
            _ => return, // stale wake-up
        }
        if self.cluster.fits_somewhere(pod) {
            self.attempt_place(pod);
        }
    }

    fn on_schedule_pass(&mut self) {
        if self.pass_scheduled == Some(self.now) {
            self.pass_scheduled = None;
        }
        for pod in self.cluster.eligible_pending(self.now) {
            self.attempt_place(pod);
        }
        // Work conservation: after a pass, no still-eligible pod fits
        // anywhere (the ones that would fit were just placed).
        #[cfg(debug_assertions)]
        {
            let eligible = self.cluster.eligible_pending(self.now);
            debug_assert!(
                eligible.iter().all(|&p| !self.cluster.fits_somewhere(p)),
                "eligible pod left pending despite free capacity at t={}",
                self.now
            );
        }
    }

    fn schedule_pass(&mut self) {
        if self.pass_scheduled != Some(self.now) {
            self.pass_scheduled = Some(self.now);
            self.push(self.now, EventKind::SchedulePass);
        }
    }

    fn on_pod_created(&mut self, pod: PodIdx) {
        let node = match self.cluster.pod(pod).phase {
            PodPhase::Creating { node } => node,
            _ => return, // terminated during creation
        };
        self.cluster.mark_running(pod);
        self.emit_pod(TraceKind::PodCreated, pod, Some(node), None);
        match self.cluster.pod(pod).spec.payload.clone() {
            PodPayload::Task(task) => {
                self.push(self.now, EventKind::TaskStarted { task, pod });
            }
            PodPayload::Batch(tasks) => {
                self.batch_pos[pod] = 0;
                self.push(self.now, EventKind::TaskStarted { task: tasks[0], pod });
            }
            PodPayload::Worker(_) => {
                self.push(self.now, EventKind::WorkerIdle { pod });
            }
        }
    }

    fn start_worker_task(&mut self, pool_idx: usize, worker_pod: PodIdx, task: TaskIdx) {
        self.disposition[task] = Disposition::OnPod { pod: worker_pod };
        let latency = self.pool_specs[pool_idx].dequeue_latency_ms;
        self.push(self.now + latency, EventKind::TaskStarted { task, pod: worker_pod });
    }

    fn on_task_started(&mut self, task: TaskIdx, pod: PodIdx) {
        if self.started[task] {
            self.duplicate_start = true;
        }
        self.started[task] = true;
        self.disposition[task] = Disposition::Running { pod };
        self.emit_task(TraceKind::TaskStarted, task, Some(pod));
        let runtime = self.dag.task(task).runtime_ms;
        self.push(self.now + runtime, EventKind::TaskCompleted { task, pod });
    }

    fn on_task_completed(&mut self, task: TaskIdx, pod: PodIdx) {
        self.disposition[task] = Disposition::Done;
        self.completed_count += 1;
        self.emit_task(TraceKind::TaskCompleted, task, Some(pod));

        for i in 0..self.dag.child_idxs(task).len() {
            let child = self.dag.child_idxs(task)[i];
            self.remaining_parents[child] -= 1;
            if self.remaining_parents[child] == 0 {
                self.push(self.now + self.engine_latency_ms, EventKind::TaskReady { task: child });
            }
        }

        match self.cluster.pod(pod).spec.payload.clone() {
            PodPayload::Task(_) => self.push(self.now, EventKind::PodCompleted { pod }),
            PodPayload::Batch(tasks) => {
                self.batch_pos[pod] += 1;
                match tasks.get(self.batch_pos[pod]) {
                    Some(&next) => self.push(self.now, EventKind::TaskStarted { task: next, pod }),
                    None => self.push(self.now, EventKind::PodCompleted { pod }),
                }
            }
            PodPayload::Worker(_) => self.push(self.now, EventKind::WorkerIdle { pod }),
        }
    }

    fn on_pod_completed(&mut self, pod: PodIdx) {
        self.cluster.complete_pod(pod, self.now).expect("completing a running pod");
        self.emit_pod(TraceKind::PodCompleted, pod, None, None);
        self.schedule_pass();
    }

    fn on_worker_idle(&mut self, pod: PodIdx) {
        if !matches!(self.cluster.pod(pod).phase, PodPhase::Running { .. }) {
            return;
        }
        let PodPayload::Worker(pool_idx) = self.cluster.pod(pod).spec.payload else {
            return;
        };
        match self.pools[pool_idx].next_action(pod) {
            WorkerAction::Terminate => {
                self.cluster.terminate_pod(pod, self.now);
                self.emit_pod(TraceKind::PodTerminated, pod, None, None);
                self.schedule_pass();
            }
            WorkerAction::Assign(task) => self.start_worker_task(pool_idx, pod, task),
            WorkerAction::Idle => {}
        }
    }

    fn on_scaler_tick(&mut self) {
        debug_assert!(!self.pools.is_empty(), "tick armed without pools");
        let slots = self.cluster.worker_slots(self.slot_cpu, self.slot_mem);
        let metrics: Vec<PoolMetrics> = self
            .pools
            .iter()
            .map(|p| PoolMetrics {
                queue_length: p.queue_len(),
                busy_workers: p.busy_workers(),
                current_replicas: p.current_replicas(),
            })
            .collect();
        let desired = autoscaler::desired_replicas(&metrics, &self.pool_caps, slots);

        let mut acted = false;
        for p in 0..self.pools.len() {
            let m = metrics[p];
            let event = TraceEvent {
                time_ms: self.now,
                kind: TraceKind::ScaleDecision,
                task_id: None,
                pod_id: None,
                pool: Some(self.pool_type_name(p)),
                node: None,
                detail: Some(Detail::Scale {
                    desired: desired[p],
                    current: m.current_replicas,
                    queue: m.queue_length,
                    busy: m.busy_workers,
                    slots,
                }),
            };
            self.emit(event);
            self.windows[p].record(self.now, desired[p], self.scaler.stabilization_ms);

            if desired[p] > m.current_replicas {
                if !self.pools[p].is_poisoned() {
                    for _ in m.current_replicas..desired[p] {
                        self.submit_worker(p);
                    }
                    acted = true;
                }
            } else {
                // Scale down only to the highest desire seen across the
                // stabilization window. Busy victims are drained, not
                // killed, so in-flight tasks always finish.
                let floor = self.windows[p].window_max();
                if floor < m.current_replicas {
                    let plan = self.pools[p].plan_scale_down(m.current_replicas - floor);
                    acted = acted
                        || !(plan.cancel.is_empty()
                            && plan.remove_idle.is_empty()
                            && plan.drain.is_empty());
                    for pod in plan.cancel.iter().chain(plan.remove_idle.iter()) {
                        let released = self.cluster.terminate_pod(*pod, self.now);
                        self.emit_pod(TraceKind::PodTerminated, *pod, None, None);
                        if released {
                            self.schedule_pass();
                        }
                    }
                    for pod in plan.drain {
                        self.emit_pod(TraceKind::WorkerDrain, pod, None, None);
                    }
                }
            }
        }

        if self.completed_count < self.dag.len() {
            // Keep ticking while anything can still move: other events are
            // queued, this tick acted, or some healthy pool has live
            // workers or an unmet target (a stabilizing scale-down counts).
            // Otherwise the simulation is stuck; stop re-arming so the
            // deadlock surfaces on the drained event queue.
            let future_possible = acted
                || self.non_tick_events > 0
                || (0..self.pools.len()).any(|p| {
                    !self.pools[p].is_poisoned()
                        && (self.pools[p].current_replicas() > 0
                            || desired[p] != self.pools[p].current_replicas())
                });
            if future_possible {
                self.push(self.now + self.scaler.interval_ms, EventKind::ScalerTick);
            }
        }
    }

    fn deadlock_error(&self) -> SimError {
        let mut stuck = Vec::new();
        for (i, done) in self.disposition.iter().enumerate() {
            if *done == Disposition::Done {
                continue;
            }
            let state = match *done {
                Disposition::Blocked => {
                    let missing = self
                        .dag
                        .parent_idxs(i)
                        .iter()
                        .filter(|&&p| self.disposition[p] != Disposition::Done)
                        .count();
                    format!("waiting on {missing} incomplete parent(s)")
                }
                Disposition::Buffered { rule } => {
                    format!("buffered in clustering rule {rule}")
                }
                Disposition::Queued { pool } => {
                    let spec = &self.pool_specs[pool];
                    if self.pools[pool].is_poisoned() {
                        format!(
                            "queued in pool `{}` whose workers are unschedulable",
                            spec.task_type
                        )
                    } else {
                        format!("queued in pool `{}`", spec.task_type)
                    }
                }
                Disposition::OnPod { pod } | Disposition::Running { pod } => {
                    let p = self.cluster.pod(pod);
                    match p.phase {
                        PodPhase::Pending { attempts, next_eligible_ms } => format!(
                            "on pod `{}` Pending (attempts={attempts}, next_eligible_ms={next_eligible_ms})",
                            p.spec.id
                        ),
                        ref other => format!("on pod `{}` {}", p.spec.id, other.name()),
                    }
                }
                Disposition::Done => unreachable!(),
            };
            stuck.push(StuckTask { task_id: self.dag.task(i).id.clone(), state });
        }
        SimError::Deadlock { stuck }
    }

    fn into_result(self) -> SimResult {
        let makespan_ms = metrics::makespan(&self.trace).expect("run completed");
        let stages = metrics::stage_stats(&self.trace);
        let causality_ok = metrics::verify_causality(&self.trace, &self.dag).is_ok();
        let audit = AuditReport {
            tasks_total: self.dag.len(),
            tasks_completed: self.completed_count,
            executed_exactly_once: !self.duplicate_start
                && self.started.iter().all(|&s| s)
                && self.completed_count == self.dag.len(),
            allocation_within_capacity: self.cluster.allocation_invariant_held(),
            causality_ok,
        };
        SimResult {
            makespan_ms,
            trace: self.trace,
            stages,
            audit,
            slot_capacity: slot_capacity(&self.dag, &self.cluster_cfg),
            total_cpu_m: self.cluster_cfg.nodes.count as u64 * self.cluster_cfg.nodes.cpu_m,
            tasks_total: self.dag.len(),
            name: String::new(),
        }
    }
}

/// How many tasks of the workload's modal request size fit the cluster at
/// once. This is the "cluster capacity" utilization charts are drawn
/// against.
pub fn slot_capacity(dag: &WorkflowDag, cluster: &ClusterConfig) -> u64 {
    let mut counts: Vec<((u64, u64), usize)> = Vec::new();
    for t in dag.tasks() {
        let key = (t.cpu_request_millicores, t.mem_request_mb);
        match counts.iter_mut().find(|(k, _)| *k == key) {
            Some((_, c)) => *c += 1,
            None => counts.push((key, 1)),
        }
    }
    let Some(&((cpu, mem), _)) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| (b.0).cmp(&a.0)))
    else {
        return 0;
    };
    let per_node = (cluster.nodes.cpu_m / cpu.max(1)).min(cluster.nodes.mem_mb / mem.max(1));
    per_node * cluster.nodes.count as u64
}

/// Runs one scenario to quiescence. The same config and seed produce a
/// bit-identical trace.
pub fn run(config: &SimConfig) -> Result<SimResult, SimError> {
    let mut result = Engine::new(config)?.run()?;
    result.name = config.name.clone();
    Ok(result)
}

/// Runs scenarios independently; failures do not abort siblings.
pub fn run_suite(configs: &[SimConfig]) -> Vec<(String, Result<SimResult, SimError>)> {
    configs.iter().map(|c| (c.name.clone(), run(c))).collect()
}
