//! The modeled Kubernetes data plane: nodes, pod lifecycle, request-based
//! placement, a pending queue with exponential back-off, pod-creation
//! overhead, and an admission rate limit.
//!
//! Placement is requests-based: a pod fits a node when the node's allocated
//! requests plus the pod's requests stay within capacity on both CPU and
//! memory. Consumption above requests is out of scope.
//!
//! Back-off is a minimum wait, not a poll. A pod that failed placement may
//! not be retried before its `next_eligible_ms`; from then on it is placed
//! at the first opportunity — its own expiry wake-up if capacity is free,
//! or the scheduling pass that follows any resource release. A failed
//! attempt (at admission or during a pass) increments the attempt counter
//! and re-arms the back-off; an expiry wake-up that finds no room leaves
//! the pod eligible without penalty.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ClusterError;
use crate::workflow::TaskIdx;

pub type NodeIdx = usize;
pub type PodIdx = usize;
pub type PoolIdx = usize;

/// Capacity of one worker node.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct NodeSpec {
    pub cpu_capacity_millicores: u64,
    pub mem_capacity_mb: u64,
}

impl Default for NodeSpec {
    fn default() -> Self {
        Self { cpu_capacity_millicores: 4000, mem_capacity_mb: 16_384 }
    }
}

/// What a pod does once it runs. The cluster never interprets this; it is
/// carried for the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PodPayload {
    /// Execute one workflow task to completion, then exit.
    Task(TaskIdx),
    /// Execute a same-type batch strictly sequentially, then exit.
    Batch(Vec<TaskIdx>),
    /// Loop on the given pool's work queue until drained away.
    Worker(PoolIdx),
}

impl PodPayload {
    pub fn is_worker(&self) -> bool {
        matches!(self, PodPayload::Worker(_))
    }
}

/// Immutable description of a pod at submission time.
#[derive(Debug, Clone)]
pub struct PodSpec {
    pub id: Arc<str>,
    pub cpu_request_millicores: u64,
    pub mem_request_mb: u64,
    pub creation_overhead_ms: u64,
    pub payload: PodPayload,
}

/// Lifecycle state of a pod.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PodPhase {
    /// Submitted, waiting to clear the admission rate limiter.
    Submitted,
    /// Admitted but unplaceable so far; waiting out its back-off.
    Pending { attempts: u32, next_eligible_ms: u64 },
    /// Assigned to a node, paying the creation overhead. Requests are
    /// already allocated.
    Creating { node: NodeIdx },
    Running { node: NodeIdx },
    Succeeded,
    /// Removed by scale-down (workers) or cancelled before starting.
    Terminated,
    /// Requests exceed every node's total capacity; terminal.
    Unschedulable,
}

impl PodPhase {
    pub fn name(&self) -> &'static str {
        match self {
            PodPhase::Submitted => "Submitted",
            PodPhase::Pending { .. } => "Pending",
            PodPhase::Creating { .. } => "Creating",
            PodPhase::Running { .. } => "Running",
            PodPhase::Succeeded => "Succeeded",
            PodPhase::Terminated => "Terminated",
            PodPhase::Unschedulable => "Unschedulable",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, PodPhase::Succeeded | PodPhase::Terminated | PodPhase::Unschedulable)
    }
}

#[derive(Debug)]
pub struct Pod {
    pub spec: PodSpec,
    pub phase: PodPhase,
    pub submitted_at_ms: u64,
    last_failure_ms: Option<u64>,
}

/// Exponential back-off schedule for pending pods.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct BackoffPolicy {
    pub initial_ms: u64,
    pub factor: u64,
    pub cap_ms: u64,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self { initial_ms: 5000, factor: 2, cap_ms: 300_000 }
    }
}

impl BackoffPolicy {
    /// `min(cap_ms, initial_ms * factor^(attempts - 1))`, saturating.
    pub fn delay_ms(&self, attempts: u32) -> u64 {
        debug_assert!(attempts >= 1);
        let mut d = self.initial_ms;
        for _ in 1..attempts {
            if d >= self.cap_ms {
                break;
            }
            d = d.saturating_mul(self.factor);
        }
        d.min(self.cap_ms)
    }
}

/// Token-bucket admission limit modeling bounded pod-creation throughput.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissionConfig {
    pub rate_per_s: u64,
    pub burst: u64,
}

impl Default for AdmissionConfig {
    fn default() -> Self {
        Self { rate_per_s: 20, burst: 40 }
    }
}

/// Exact integer token bucket. Time is scaled by the rate so that one token
/// is worth 1000 units regardless of whether `rate_per_s` divides 1000.
#[derive(Debug)]
struct AdmissionLimiter {
    rate_per_s: u64,
    burst_tolerance: u64,
    theoretical_arrival: u64,
}

impl AdmissionLimiter {
    fn new(config: AdmissionConfig) -> Self {
        debug_assert!(config.rate_per_s >= 1 && config.burst >= 1);
        Self {
            rate_per_s: config.rate_per_s.max(1),
            burst_tolerance: (config.burst.max(1) - 1) * 1000,
            theoretical_arrival: 0,
        }
    }

    /// Time at which a pod submitted at `now_ms` clears the limiter.
    fn admit_at(&mut self, now_ms: u64) -> u64 {
        let scaled_now = now_ms * self.rate_per_s;
        let earliest = scaled_now.max(self.theoretical_arrival.saturating_sub(self.burst_tolerance));
        self.theoretical_arrival = scaled_now.max(self.theoretical_arrival) + 1000;
        earliest.div_ceil(self.rate_per_s)
    }
}

/// Cluster-level configuration, mirroring the scenario file block.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub nodes: NodeGroup,
    pub backoff: BackoffPolicy,
    pub admission: AdmissionConfig,
    pub pod_overhead_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NodeGroup {
    pub count: usize,
    pub cpu_m: u64,
    pub mem_mb: u64,
}

impl Default for NodeGroup {
    fn default() -> Self {
        Self { count: 17, cpu_m: 4000, mem_mb: 16_384 }
    }
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            nodes: NodeGroup::default(),
            backoff: BackoffPolicy::default(),
            admission: AdmissionConfig::default(),
            pod_overhead_ms: 2000,
        }
    }
}

#[derive(Debug)]
struct Node {
    spec: NodeSpec,
    alloc_cpu: u64,
    alloc_mem: u64,
    // Allocation by pods that are not pool workers; the autoscaler sizes
    // worker slots against capacity net of these.
    nonpool_cpu: u64,
    nonpool_mem: u64,
}

impl Node {
    fn free_cpu(&self) -> u64 {
        self.spec.cpu_capacity_millicores - self.alloc_cpu
    }

    fn fits(&self, cpu: u64, mem: u64) -> bool {
        self.alloc_cpu + cpu <= self.spec.cpu_capacity_millicores
            && self.alloc_mem + mem <= self.spec.mem_capacity_mb
    }
}

/// Result of one placement attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementOutcome {
    /// Assigned; the pod enters `Creating` and is `Running` at `running_at_ms`.
    Placed { node: NodeIdx, running_at_ms: u64 },
    /// No room; the pod is `Pending` and must wait out `next_eligible_ms`.
    Deferred { attempts: u32, next_eligible_ms: u64 },
    /// Requests exceed every node's total capacity; terminal.
    Unschedulable,
}

/// Mutable cluster state. All mutation happens on the simulator's event
/// loop; reads are free.
#[derive(Debug)]
pub struct ClusterState {
    nodes: Vec<Node>,
    pods: Vec<Pod>,
    by_id: HashMap<Arc<str>, PodIdx>,
    /// Pending pods in submission order; entries whose pods left `Pending`
    /// are dropped lazily.
    pending: Vec<PodIdx>,
    limiter: AdmissionLimiter,
    backoff: BackoffPolicy,
    /// Stays true as long as no allocation ever exceeded capacity.
    allocation_ok: bool,
}

impl ClusterState {
    pub fn new(config: &ClusterConfig) -> Self {
        let spec = NodeSpec {
            cpu_capacity_millicores: config.nodes.cpu_m,
            mem_capacity_mb: config.nodes.mem_mb,
        };
        Self {
            nodes: (0..config.nodes.count)
                .map(|_| Node { spec, alloc_cpu: 0, alloc_mem: 0, nonpool_cpu: 0, nonpool_mem: 0 })
                .collect(),
            pods: Vec::new(),
            by_id: HashMap::new(),
            pending: Vec::new(),
            limiter: AdmissionLimiter::new(config.admission),
            backoff: config.backoff,
            allocation_ok: true,
        }
    }

    pub fn backoff_policy(&self) -> &BackoffPolicy {
        &self.backoff
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn pod(&self, idx: PodIdx) -> &Pod {
        &self.pods[idx]
    }

    pub fn pods(&self) -> &[Pod] {
        &self.pods
    }

    /// Registers a pod and runs it through the admission limiter. Returns
    /// the pod handle and the time at which it becomes schedulable.
    pub fn submit_pod(
        &mut self,
        spec: PodSpec,
        now_ms: u64,
    ) -> Result<(PodIdx, u64), ClusterError> {
        if self.by_id.contains_key(&spec.id) {
            return Err(ClusterError::DuplicatePodId(spec.id.to_string()));
        }
        let idx = self.pods.len();
        self.by_id.insert(spec.id.clone(), idx);
        self.pods.push(Pod {
            spec,
            phase: PodPhase::Submitted,
            submitted_at_ms: now_ms,
            last_failure_ms: None,
        });
        let admit_at = self.limiter.admit_at(now_ms);
        Ok((idx, admit_at))
    }

    /// True if some node currently has room for the pod's requests.
    pub fn fits_somewhere(&self, pod: PodIdx) -> bool {
        let p = &self.pods[pod];
        self.nodes
            .iter()
            .any(|n| n.fits(p.spec.cpu_request_millicores, p.spec.mem_request_mb))
    }

    /// Attempts to place a pod. On success the pod enters `Creating` on the
    /// feasible node with the most free CPU after placement (ties to the
    /// lowest node id). On failure the attempt counter increments and the
    /// back-off re-arms — at most once per timestamp per pod.
    pub fn try_place(&mut self, pod: PodIdx, now_ms: u64) -> PlacementOutcome {
        let (cpu, mem) = {
            let p = &self.pods[pod];
            debug_assert!(matches!(p.phase, PodPhase::Submitted | PodPhase::Pending { .. }));
            (p.spec.cpu_request_millicores, p.spec.mem_request_mb)
        };

        let mut best: Option<(u64, NodeIdx)> = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.fits(cpu, mem) {
                let free_after = n.free_cpu() - cpu;
                if best.is_none_or(|(f, _)| free_after > f) {
                    best = Some((free_after, i));
                }
            }
        }

        match best {
            Some((_, node)) => {
                self.allocate(node, pod);
                let overhead = self.pods[pod].spec.creation_overhead_ms;
                self.pods[pod].phase = PodPhase::Creating { node };
                PlacementOutcome::Placed { node, running_at_ms: now_ms + overhead }
            }
            None => self.defer(pod, now_ms),
        }
    }

    fn defer(&mut self, pod: PodIdx, now_ms: u64) -> PlacementOutcome {
        let infeasible = !self.nodes.iter().any(|n| {
            self.pods[pod].spec.cpu_request_millicores <= n.spec.cpu_capacity_millicores
                && self.pods[pod].spec.mem_request_mb <= n.spec.mem_capacity_mb
        });
        if infeasible {
            self.pods[pod].phase = PodPhase::Unschedulable;
            return PlacementOutcome::Unschedulable;
        }
        let p = &mut self.pods[pod];
        let prev_attempts = match p.phase {
            PodPhase::Pending { attempts, next_eligible_ms } => {
                // One failure per timestamp keeps next_eligible_ms strictly
                // increasing even at the back-off cap.
                if p.last_failure_ms == Some(now_ms) {
                    return PlacementOutcome::Deferred { attempts, next_eligible_ms };
                }
                attempts
            }
            _ => 0,
        };
        let attempts = prev_attempts + 1;
        let next_eligible_ms = now_ms + self.backoff.delay_ms(prev_attempts.max(1));
        p.last_failure_ms = Some(now_ms);
        let newly_pending = !matches!(p.phase, PodPhase::Pending { .. });
        p.phase = PodPhase::Pending { attempts, next_eligible_ms };
        if newly_pending {
            self.pending.push(pod);
        }
        PlacementOutcome::Deferred { attempts, next_eligible_ms }
    }

    /// Creation overhead has elapsed; the pod starts doing work.
    pub fn mark_running(&mut self, pod: PodIdx) {
        let p = &mut self.pods[pod];
        match p.phase {
            PodPhase::Creating { node } => p.phase = PodPhase::Running { node },
            ref other => debug_assert!(false, "mark_running on {}", other.name()),
        }
    }

    /// Pod finished its payload; releases its node allocation. The caller
    /// must follow up with a scheduling pass over eligible pending pods.
    pub fn complete_pod(&mut self, pod: PodIdx, _now_ms: u64) -> Result<(), ClusterError> {
        match self.pods[pod].phase {
            PodPhase::Running { node } => {
                self.release(node, pod);
                self.pods[pod].phase = PodPhase::Succeeded;
                Ok(())
            }
            ref other => Err(ClusterError::NotRunning {
                pod: self.pods[pod].spec.id.to_string(),
                state: other.name().to_string(),
            }),
        }
    }

    /// Removes a pod outside the success path (worker scale-down, or
    /// cancellation before it started). Releases any held allocation.
    /// Returns true if resources were released.
    pub fn terminate_pod(&mut self, pod: PodIdx, _now_ms: u64) -> bool {
        let released = match self.pods[pod].phase {
            PodPhase::Creating { node } | PodPhase::Running { node } => {
                self.release(node, pod);
                true
            }
            _ => false,
        };
        self.pods[pod].phase = PodPhase::Terminated;
        released
    }

    /// Pending pods whose back-off has elapsed, in submission order.
    /// Compacts the pending queue as a side effect.
    pub fn eligible_pending(&mut self, now_ms: u64) -> Vec<PodIdx> {
        let pods = &self.pods;
        self.pending.retain(|&i| matches!(pods[i].phase, PodPhase::Pending { .. }));
        self.pending
            .iter()
            .copied()
            .filter(|&i| match pods[i].phase {
                PodPhase::Pending { next_eligible_ms, .. } => next_eligible_ms <= now_ms,
                _ => false,
            })
            .collect()
    }

    /// Count of pods currently waiting in `Pending`.
    pub fn pending_count(&self) -> usize {
        self.pending
            .iter()
            .filter(|&&i| matches!(self.pods[i].phase, PodPhase::Pending { .. }))
            .count()
    }

    /// Allocated CPU requests over total CPU capacity.
    pub fn allocated_fraction(&self) -> f64 {
        let total: u64 = self.nodes.iter().map(|n| n.spec.cpu_capacity_millicores).sum();
        if total == 0 {
            return 0.0;
        }
        let alloc: u64 = self.nodes.iter().map(|n| n.alloc_cpu).sum();
        alloc as f64 / total as f64
    }

    /// Whole-cluster worker slots of the given size, counted against
    /// capacity net of non-worker pods. Worker pods themselves do not
    /// reduce the count: the autoscaler divides this budget among pools.
    pub fn worker_slots(&self, slot_cpu: u64, slot_mem: u64) -> u64 {
        debug_assert!(slot_cpu > 0 && slot_mem > 0);
        self.nodes
            .iter()
            .map(|n| {
                let cpu = (n.spec.cpu_capacity_millicores - n.nonpool_cpu) / slot_cpu;
                let mem = (n.spec.mem_capacity_mb - n.nonpool_mem) / slot_mem;
                cpu.min(mem)
            })
            .sum()
    }

    /// True if every allocation so far stayed within node capacity.
    pub fn allocation_invariant_held(&self) -> bool {
        self.allocation_ok
    }

    fn allocate(&mut self, node: NodeIdx, pod: PodIdx) {
        let (cpu, mem, worker) = {
            let s = &self.pods[pod].spec;
            (s.cpu_request_millicores, s.mem_request_mb, s.payload.is_worker())
        };
        let n = &mut self.nodes[node];
        n.alloc_cpu += cpu;
        n.alloc_mem += mem;
        if !worker {
            n.nonpool_cpu += cpu;
            n.nonpool_mem += mem;
        }
        if n.alloc_cpu > n.spec.cpu_capacity_millicores || n.alloc_mem > n.spec.mem_capacity_mb {
            self.allocation_ok = false;
            debug_assert!(false, "allocation exceeded capacity on node {node}");
        }
    }

    fn release(&mut self, node: NodeIdx, pod: PodIdx) {
        let (cpu, mem, worker) = {
            let s = &self.pods[pod].spec;
            (s.cpu_request_millicores, s.mem_request_mb, s.payload.is_worker())
        };
        let n = &mut self.nodes[node];
        n.alloc_cpu -= cpu;
        n.alloc_mem -= mem;
        if !worker {
            n.nonpool_cpu -= cpu;
            n.nonpool_mem -= mem;
        }
    }
}
