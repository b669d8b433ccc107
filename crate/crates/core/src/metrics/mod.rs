//! Derivations over simulation traces: makespan, parallelism/utilization
//! series, stall detection, stage statistics, deterministic CSV/JSON export
//! and SVG charts.

pub mod charts;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::SimError;
use crate::workflow::WorkflowDag;

/// One timestamped lifecycle record. For task events the `pool` column
/// carries the task type; for worker pods and scale decisions it carries
/// the pool's task type.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceEvent {
    pub time_ms: u64,
    pub kind: TraceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pod_id: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Detail>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    TaskReady,
    TaskStarted,
    TaskCompleted,
    PodSubmitted,
    PodAdmitted,
    PodScheduled,
    PodCreated,
    PodPending,
    PodUnschedulable,
    PodCompleted,
    PodTerminated,
    WorkerDrain,
    BatchFormed,
    ScaleDecision,
}

impl TraceKind {
    pub const ALL: [TraceKind; 14] = [
        TraceKind::TaskReady,
        TraceKind::TaskStarted,
        TraceKind::TaskCompleted,
        TraceKind::PodSubmitted,
        TraceKind::PodAdmitted,
        TraceKind::PodScheduled,
        TraceKind::PodCreated,
        TraceKind::PodPending,
        TraceKind::PodUnschedulable,
        TraceKind::PodCompleted,
        TraceKind::PodTerminated,
        TraceKind::WorkerDrain,
        TraceKind::BatchFormed,
        TraceKind::ScaleDecision,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TraceKind::TaskReady => "TaskReady",
            TraceKind::TaskStarted => "TaskStarted",
            TraceKind::TaskCompleted => "TaskCompleted",
            TraceKind::PodSubmitted => "PodSubmitted",
            TraceKind::PodAdmitted => "PodAdmitted",
            TraceKind::PodScheduled => "PodScheduled",
            TraceKind::PodCreated => "PodCreated",
            TraceKind::PodPending => "PodPending",
            TraceKind::PodUnschedulable => "PodUnschedulable",
            TraceKind::PodCompleted => "PodCompleted",
            TraceKind::PodTerminated => "PodTerminated",
            TraceKind::WorkerDrain => "WorkerDrain",
            TraceKind::BatchFormed => "BatchFormed",
            TraceKind::ScaleDecision => "ScaleDecision",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown trace kind `{s}`"))
    }
}

/// Structured event detail; rendered as `key=value` pairs joined by `;`
/// in the CSV detail column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detail {
    Requests { cpu_m: u64, mem_mb: u64 },
    Backoff { attempts: u32, next_eligible_ms: u64 },
    Batch { size: u32 },
    Scale { desired: u64, current: u64, queue: u64, busy: u64, slots: u64 },
}

impl fmt::Display for Detail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detail::Requests { cpu_m, mem_mb } => write!(f, "cpu_m={cpu_m};mem_mb={mem_mb}"),
            Detail::Backoff { attempts, next_eligible_ms } => {
                write!(f, "attempts={attempts};next_eligible_ms={next_eligible_ms}")
            }
            Detail::Batch { size } => write!(f, "size={size}"),
            Detail::Scale { desired, current, queue, busy, slots } => write!(
                f,
                "desired={desired};current={current};queue={queue};busy={busy};slots={slots}"
            ),
        }
    }
}

impl FromStr for Detail {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = HashMap::new();
        for pair in s.split(';') {
            let (k, v) = pair.split_once('=').ok_or_else(|| format!("bad detail `{s}`"))?;
            map.insert(k, v.parse::<u64>().map_err(|e| format!("bad detail `{s}`: {e}"))?);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| format!("bad detail `{s}`"));
        if map.contains_key("cpu_m") {
            Ok(Detail::Requests { cpu_m: get("cpu_m")?, mem_mb: get("mem_mb")? })
        } else if map.contains_key("attempts") {
            Ok(Detail::Backoff {
                attempts: get("attempts")? as u32,
                next_eligible_ms: get("next_eligible_ms")?,
            })
        } else if map.contains_key("size") {
            Ok(Detail::Batch { size: get("size")? as u32 })
        } else if map.contains_key("desired") {
            Ok(Detail::Scale {
                desired: get("desired")?,
                current: get("current")?,
                queue: get("queue")?,
                busy: get("busy")?,
                slots: get("slots")?,
            })
        } else {
            Err(format!("bad detail `{s}`"))
        }
    }
}

/// Export targets for a simulation result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// The full event trace, one row per event.
    Csv,
    /// Result summary: makespan, stages, stalls, audit, trace hash.
    Json,
    /// Gantt chart with utilization subplot, as SVG.
    GanttImage,
    /// Standalone utilization chart, as SVG.
    UtilizationImage,
}

impl ExportFormat {
    pub fn file_name(&self) -> &'static str {
        match self {
            ExportFormat::Csv => "trace.csv",
            ExportFormat::Json => "result.json",
            ExportFormat::GanttImage => "gantt.svg",
            ExportFormat::UtilizationImage => "utilization.svg",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "gantt-image" | "gantt" => Ok(ExportFormat::GanttImage),
            "utilization-image" | "utilization" => Ok(ExportFormat::UtilizationImage),
            other => Err(format!(
                "unknown format `{other}` (expected csv, json, gantt-image or utilization-image)"
            )),
        }
    }
}

pub const CSV_HEADER: &str = "time_ms,kind,task_id,pod_id,pool,node,detail";

/// Renders the trace as CSV. Output is byte-stable for a fixed trace and
/// is the input to [`trace_hash`].
pub fn to_csv(trace: &[TraceEvent]) -> String {
    let mut out = String::with_capacity(trace.len() * 48 + 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in trace {
        use fmt::Write;
        let _ = write!(out, "{},{},", e.time_ms, e.kind);
        if let Some(t) = &e.task_id {
            out.push_str(t);
        }
        out.push(',');
        if let Some(p) = &e.pod_id {
            out.push_str(p);
        }
        out.push(',');
        if let Some(p) = &e.pool {
            out.push_str(p);
        }
        out.push(',');
        if let Some(n) = e.node {
            let _ = write!(out, "{n}");
        }
        out.push(',');
        if let Some(d) = &e.detail {
            let _ = write!(out, "{d}");
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV trace written by [`to_csv`].
pub fn from_csv(text: &str) -> Result<Vec<TraceEvent>, SimError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(SimError::IncompleteTrace(format!(
                "bad csv header: {:?}",
                other.unwrap_or_default()
            )))
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(7, ',').collect();
        if cols.len() != 7 {
            return Err(SimError::IncompleteTrace(format!("line {}: bad column count", n + 2)));
        }
        let opt = |s: &str| -> Option<Arc<str>> {
            if s.is_empty() {
                None
            } else {
                Some(Arc::from(s))
            }
        };
        let err = |e: String| SimError::IncompleteTrace(format!("line {}: {e}", n + 2));
        out.push(TraceEvent {
            time_ms: cols[0].parse().map_err(|e| err(format!("{e}")))?,
            kind: cols[1].parse().map_err(err)?,
            task_id: opt(cols[2]),
            pod_id: opt(cols[3]),
            pool: opt(cols[4]),
            node: if cols[5].is_empty() {
                None
            } else {
                Some(cols[5].parse().map_err(|e| err(format!("{e}")))?)
            },
            detail: if cols[6].is_empty() { None } else { Some(cols[6].parse().map_err(err)?) },
        });
    }
    Ok(out)
}

/// SHA-256 of the CSV rendering, as lowercase hex. This is the determinism
/// fingerprint of a run.
pub fn trace_hash(trace: &[TraceEvent]) -> String {
    let digest = Sha256::digest(to_csv(trace).as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        use fmt::Write;
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Last task completion minus first task readiness.
pub fn makespan(trace: &[TraceEvent]) -> Result<u64, SimError> {
    let first_ready = trace
        .iter()
        .find(|e| e.kind == TraceKind::TaskReady)
        .map(|e| e.time_ms)
        .ok_or_else(|| SimError::IncompleteTrace("no TaskReady event".into()))?;
    let ready = trace.iter().filter(|e| e.kind == TraceKind::TaskReady).count();
    let completed = trace.iter().filter(|e| e.kind == TraceKind::TaskCompleted).count();
    if completed < ready {
        return Err(SimError::IncompleteTrace(format!(
            "{} task(s) ready but only {} completed",
            ready, completed
        )));
    }
    let last_completed = trace
        .iter()
        .filter(|e| e.kind == TraceKind::TaskCompleted)
        .map(|e| e.time_ms)
        .max()
        .ok_or_else(|| SimError::IncompleteTrace("no TaskCompleted event".into()))?;
    Ok(last_completed - first_ready)
}

/// Event-aligned running-task counts: `(time, running)` after all events
/// at `time` are applied. Exact; no sampling error.
pub fn running_series(trace: &[TraceEvent]) -> Vec<(u64, u32)> {
    let mut series: Vec<(u64, u32)> = Vec::new();
    let mut running: u32 = 0;
    for e in trace {
        let delta: i64 = match e.kind {
            TraceKind::TaskStarted => 1,
            TraceKind::TaskCompleted => -1,
            _ => continue,
        };
        running = (running as i64 + delta) as u32;
        match series.last_mut() {
            Some(last) if last.0 == e.time_ms => last.1 = running,
            _ => series.push((e.time_ms, running)),
        }
    }
    series
}

/// Exact integral of running tasks over time, in task-milliseconds. Equals
/// the sum of executed task runtimes for a complete run.
pub fn work_integral_ms(trace: &[TraceEvent]) -> u128 {
    let series = running_series(trace);
    let mut total: u128 = 0;
    for win in series.windows(2) {
        total += (win[1].0 - win[0].0) as u128 * win[0].1 as u128;
    }
    total
}

/// Mean of the running-task curve over `[from_ms, to_ms)`, exact.
pub fn mean_running_over(trace: &[TraceEvent], from_ms: u64, to_ms: u64) -> f64 {
    if to_ms <= from_ms {
        return 0.0;
    }
    let series = running_series(trace);
    let mut integral: u128 = 0;
    let mut level: u32 = 0;
    let mut prev = from_ms;
    for &(t, r) in &series {
        if t <= from_ms {
            level = r;
            continue;
        }
        if t >= to_ms {
            break;
        }
        integral += (t - prev) as u128 * level as u128;
        prev = t;
        level = r;
    }
    integral += (to_ms - prev) as u128 * level as u128;
    integral as f64 / (to_ms - from_ms) as f64
}

pub fn max_running(trace: &[TraceEvent]) -> u32 {
    running_series(trace).iter().map(|&(_, r)| r).max().unwrap_or(0)
}

/// A periodic sample of cluster usage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct UtilizationSample {
    pub time_ms: u64,
    pub running_tasks: u32,
    pub allocated_fraction: f64,
}

/// Samples running tasks and allocated CPU fraction every `step_ms` from
/// first readiness to last completion. Sampling can miss short tasks;
/// conservation checks use [`running_series`] instead.
pub fn utilization_series(
    trace: &[TraceEvent],
    step_ms: u64,
    total_cpu_m: u64,
) -> Vec<UtilizationSample> {
    assert!(step_ms > 0, "step_ms must be > 0");
    let (Some(first), Some(last)) = (
        trace.first().map(|e| e.time_ms),
        trace.last().map(|e| e.time_ms),
    ) else {
        return Vec::new();
    };

    let run = running_series(trace);
    // Allocation deltas: +requests at PodScheduled, -requests when the pod
    // leaves the cluster.
    let mut alloc_series: Vec<(u64, u64)> = Vec::new();
    {
        let mut by_pod: HashMap<Arc<str>, u64> = HashMap::new();
        let mut level: u64 = 0;
        for e in trace {
            let delta: i64 = match e.kind {
                TraceKind::PodScheduled => {
                    if let (Some(pod), Some(Detail::Requests { cpu_m, .. })) =
                        (e.pod_id.clone(), e.detail)
                    {
                        by_pod.insert(pod, cpu_m);
                        cpu_m as i64
                    } else {
                        0
                    }
                }
                TraceKind::PodCompleted | TraceKind::PodTerminated => e
                    .pod_id
                    .as_ref()
                    .and_then(|p| by_pod.remove(p))
                    .map(|c| -(c as i64))
                    .unwrap_or(0),
                _ => continue,
            };
            if delta == 0 {
                continue;
            }
            level = (level as i64 + delta) as u64;
            match alloc_series.last_mut() {
                Some(l) if l.0 == e.time_ms => l.1 = level,
                _ => alloc_series.push((e.time_ms, level)),
            }
        }
    }

    let level_at = |series: &[(u64, u64)], t: u64| -> u64 {
        match series.partition_point(|&(st, _)| st <= t) {
            0 => 0,
            n => series[n - 1].1,
        }
    };
    let run64: Vec<(u64, u64)> = run.iter().map(|&(t, r)| (t, r as u64)).collect();

    let mut samples = Vec::new();
    let mut t = first;
    loop {
        samples.push(UtilizationSample {
            time_ms: t,
            running_tasks: level_at(&run64, t) as u32,
            allocated_fraction: if total_cpu_m == 0 {
                0.0
            } else {
                level_at(&alloc_series, t) as f64 / total_cpu_m as f64
            },
        });
        if t >= last {
            break;
        }
        t = (t + step_ms).min(last);
    }
    samples
}

/// Maximal intervals of length >= `min_gap_ms` during which fewer than
/// `below` tasks run while at least one unfinished ready task is waiting.
/// With `below == 1` these are the stall intervals: zero running tasks
/// despite queued, unblocked work. Idle tails (no pending work) never
/// qualify.
pub fn low_running_intervals(
    trace: &[TraceEvent],
    below: u32,
    min_gap_ms: u64,
) -> Vec<(u64, u64)> {
    assert!(min_gap_ms > 0, "min_gap_ms must be > 0");
    let mut intervals = Vec::new();
    let mut running: i64 = 0;
    let mut available: i64 = 0; // ready but not yet completed
    let mut since: Option<u64> = None;
    let mut idx = 0;
    while idx < trace.len() {
        let t = trace[idx].time_ms;
        while idx < trace.len() && trace[idx].time_ms == t {
            match trace[idx].kind {
                TraceKind::TaskReady => available += 1,
                TraceKind::TaskStarted => running += 1,
                TraceKind::TaskCompleted => {
                    running -= 1;
                    available -= 1;
                }
                _ => {}
            }
            idx += 1;
        }
        let waiting = available - running;
        let low = (running as u32) < below && waiting > 0;
        match (low, since) {
            (true, None) => since = Some(t),
            (false, Some(start)) => {
                if t - start >= min_gap_ms {
                    intervals.push((start, t));
                }
                since = None;
            }
            _ => {}
        }
    }
    // An open interval at trace end means work never resumed; report it.
    if let (Some(start), Some(end)) = (since, trace.last().map(|e| e.time_ms)) {
        if end - start >= min_gap_ms {
            intervals.push((start, end));
        }
    }
    intervals
}

/// Stall intervals: zero running tasks while unblocked work is queued.
pub fn stall_intervals(trace: &[TraceEvent], min_gap_ms: u64) -> Vec<(u64, u64)> {
    low_running_intervals(trace, 1, min_gap_ms)
}

/// Highest pending-pod attempt count observable at any instant within
/// `[from_ms, to_ms]`. Used to attribute stalls to back-off.
pub fn max_pending_attempts_during(trace: &[TraceEvent], from_ms: u64, to_ms: u64) -> u32 {
    let mut pending: HashMap<Arc<str>, u32> = HashMap::new();
    let mut best = 0;
    let mut entered = false;
    for e in trace {
        if e.time_ms > to_ms {
            break;
        }
        if !entered && e.time_ms >= from_ms {
            // Snapshot at window entry: pods that entered Pending earlier
            // and are still pending count as present within the window.
            best = pending.values().copied().max().unwrap_or(0);
            entered = true;
        }
        match e.kind {
            TraceKind::PodPending => {
                if let (Some(pod), Some(Detail::Backoff { attempts, .. })) =
                    (e.pod_id.clone(), e.detail)
                {
                    if e.time_ms >= from_ms {
                        best = best.max(attempts);
                    }
                    pending.insert(pod, attempts);
                }
            }
            TraceKind::PodScheduled
            | TraceKind::PodUnschedulable
            | TraceKind::PodTerminated => {
                if let Some(pod) = &e.pod_id {
                    pending.remove(pod);
                }
            }
            _ => {}
        }
    }
    if !entered && !pending.is_empty() {
        // Window lies beyond the last event; whatever is still pending counts.
        best = best.max(pending.values().copied().max().unwrap_or(0));
    }
    best
}

/// Per-task-type aggregates, ordered by first task start.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageStats {
    pub task_type: String,
    pub count: usize,
    pub first_ready_ms: u64,
    pub first_start_ms: u64,
    pub last_complete_ms: u64,
    pub busy_ms: u64,
}

pub fn stage_stats(trace: &[TraceEvent]) -> Vec<StageStats> {
    struct Acc {
        count: usize,
        first_ready: u64,
        first_start: u64,
        last_complete: u64,
        busy: u64,
    }
    let mut start_times: HashMap<Arc<str>, u64> = HashMap::new();
    let mut stages: Vec<(Arc<str>, Acc)> = Vec::new();
    let mut index: HashMap<Arc<str>, usize> = HashMap::new();
    for e in trace {
        let Some(ty) = &e.pool else { continue };
        let Some(task) = &e.task_id else { continue };
        if !matches!(
            e.kind,
            TraceKind::TaskReady | TraceKind::TaskStarted | TraceKind::TaskCompleted
        ) {
            continue;
        }
        let i = *index.entry(ty.clone()).or_insert_with(|| {
            stages.push((
                ty.clone(),
                Acc { count: 0, first_ready: u64::MAX, first_start: u64::MAX, last_complete: 0, busy: 0 },
            ));
            stages.len() - 1
        });
        let acc = &mut stages[i].1;
        match e.kind {
            TraceKind::TaskReady => {
                acc.count += 1;
                acc.first_ready = acc.first_ready.min(e.time_ms);
            }
            TraceKind::TaskStarted => {
                acc.first_start = acc.first_start.min(e.time_ms);
                start_times.insert(task.clone(), e.time_ms);
            }
            TraceKind::TaskCompleted => {
                acc.last_complete = acc.last_complete.max(e.time_ms);
                if let Some(s) = start_times.remove(task) {
                    acc.busy += e.time_ms - s;
                }
            }
            _ => {}
        }
    }
    stages.sort_by_key(|(_, a)| a.first_start);
    stages
        .into_iter()
        .map(|(ty, a)| StageStats {
            task_type: ty.to_string(),
            count: a.count,
            first_ready_ms: if a.first_ready == u64::MAX { 0 } else { a.first_ready },
            first_start_ms: if a.first_start == u64::MAX { 0 } else { a.first_start },
            last_complete_ms: a.last_complete,
            busy_ms: a.busy,
        })
        .collect()
}

/// The time window spanned by the given task types: earliest readiness to
/// latest completion. `None` when no such tasks appear.
pub fn stage_window(trace: &[TraceEvent], types: &[&str]) -> Option<(u64, u64)> {
    let mut from = u64::MAX;
    let mut to = 0;
    for e in trace {
        let Some(pool) = &e.pool else { continue };
        if e.task_id.is_none() || !types.contains(&pool.as_ref()) {
            continue;
        }
        match e.kind {
            TraceKind::TaskReady => from = from.min(e.time_ms),
            TraceKind::TaskCompleted => to = to.max(e.time_ms),
            _ => {}
        }
    }
    (from < to).then_some((from, to))
}

/// Checks trace-order causality and exactly-once execution against the DAG:
/// every start is preceded by its parents' completions and its pod's
/// creation, and every task starts and completes exactly once. Pod
/// precedence is skipped for task-only traces (no pod lifecycle recorded).
pub fn verify_causality(trace: &[TraceEvent], dag: &WorkflowDag) -> Result<(), String> {
    let mut started: HashMap<&str, usize> = HashMap::new();
    let mut completed: HashMap<&str, usize> = HashMap::new();
    let mut pod_created: HashMap<&str, usize> = HashMap::new();
    let has_pod_events = trace.iter().any(|e| e.kind == TraceKind::PodCreated);
    for (i, e) in trace.iter().enumerate() {
        match e.kind {
            TraceKind::PodCreated => {
                if let Some(pod) = &e.pod_id {
                    pod_created.entry(pod.as_ref()).or_insert(i);
                }
            }
            TraceKind::TaskStarted => {
                let task = e.task_id.as_deref().ok_or("TaskStarted without task id")?;
                if started.insert(task, i).is_some() {
                    return Err(format!("task `{task}` started twice"));
                }
                if has_pod_events {
                    let pod = e.pod_id.as_deref().ok_or("TaskStarted without pod id")?;
                    match pod_created.get(pod) {
                        Some(&c) if c < i => {}
                        _ => {
                            return Err(format!("task `{task}` started before pod `{pod}` ran"))
                        }
                    }
                }
                let idx = dag
                    .task_idx(task)
                    .ok_or_else(|| format!("trace task `{task}` not in workflow"))?;
                for &p in dag.parent_idxs(idx) {
                    let pid = dag.task(p).id.as_str();
                    match completed.get(pid) {
                        Some(&c) if c < i => {}
                        _ => {
                            return Err(format!(
                                "task `{task}` started before parent `{pid}` completed"
                            ))
                        }
                    }
                }
            }
            TraceKind::TaskCompleted => {
                let task = e.task_id.as_deref().ok_or("TaskCompleted without task id")?;
                if !started.contains_key(task) {
                    return Err(format!("task `{task}` completed without starting"));
                }
                if completed.insert(task, i).is_some() {
                    return Err(format!("task `{task}` completed twice"));
                }
            }
            _ => {}
        }
    }
    for t in dag.tasks() {
        if !completed.contains_key(t.id.as_str()) {
            return Err(format!("task `{}` never completed", t.id));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time_ms: u64, kind: TraceKind, task: &str, ty: &str) -> TraceEvent {
        TraceEvent {
            time_ms,
            kind,
            task_id: Some(Arc::from(task)),
            pod_id: Some(Arc::from(format!("pod-{task}").as_str())),
            pool: Some(Arc::from(ty)),
            node: None,
            detail: None,
        }
    }

    fn simple_trace() -> Vec<TraceEvent> {
        vec![
            ev(0, TraceKind::TaskReady, "a", "x"),
            ev(2000, TraceKind::TaskStarted, "a", "x"),
            ev(12_000, TraceKind::TaskCompleted, "a", "x"),
        ]
    }

    #[test]
    fn makespan_of_single_task_run() {
        assert_eq!(makespan(&simple_trace()).unwrap(), 12_000);
    }

    #[test]
    fn makespan_errors_on_empty_and_incomplete_traces() {
        assert!(makespan(&[]).is_err());
        let mut t = simple_trace();
        t.pop();
        assert!(makespan(&t).is_err());
    }

    #[test]
    fn running_series_counts_overlap() {
        let trace = vec![
            ev(0, TraceKind::TaskReady, "a", "x"),
            ev(0, TraceKind::TaskReady, "b", "x"),
            ev(10, TraceKind::TaskStarted, "a", "x"),
            ev(20, TraceKind::TaskStarted, "b", "x"),
            ev(30, TraceKind::TaskCompleted, "a", "x"),
            ev(40, TraceKind::TaskCompleted, "b", "x"),
        ];
        assert_eq!(running_series(&trace), vec![(10, 1), (20, 2), (30, 1), (40, 0)]);
        assert_eq!(max_running(&trace), 2);
        // a ran 20ms, b ran 20ms.
        assert_eq!(work_integral_ms(&trace), 40);
    }

    #[test]
    fn stall_between_completion_and_next_start_is_found() {
        let trace = vec![
            ev(0, TraceKind::TaskReady, "a", "x"),
            ev(0, TraceKind::TaskReady, "b", "x"),
            ev(0, TraceKind::TaskStarted, "a", "x"),
            ev(4000, TraceKind::TaskCompleted, "a", "x"),
            // b sits ready but nothing runs until t=100_000.
            ev(100_000, TraceKind::TaskStarted, "b", "x"),
            ev(102_000, TraceKind::TaskCompleted, "b", "x"),
        ];
        assert_eq!(stall_intervals(&trace, 60_000), vec![(4000, 100_000)]);
        assert!(stall_intervals(&trace, 97_000).is_empty());
        // The idle tail after b completes does not count.
        let mean = mean_running_over(&trace, 0, 102_000);
        assert!(mean > 0.0 && mean < 1.0);
    }

    #[test]
    fn no_stall_without_queued_work() {
        // Gap between serial tasks where the successor only became ready at
        // its start: nothing was waiting, so no stall.
        let trace = vec![
            ev(0, TraceKind::TaskReady, "a", "x"),
            ev(0, TraceKind::TaskStarted, "a", "x"),
            ev(1000, TraceKind::TaskCompleted, "a", "x"),
            ev(100_000, TraceKind::TaskReady, "b", "x"),
            ev(100_000, TraceKind::TaskStarted, "b", "x"),
            ev(101_000, TraceKind::TaskCompleted, "b", "x"),
        ];
        assert!(stall_intervals(&trace, 1000).is_empty());
    }

    #[test]
    fn csv_roundtrip_and_hash_stability() {
        let mut trace = simple_trace();
        trace.push(TraceEvent {
            time_ms: 15_000,
            kind: TraceKind::PodPending,
            task_id: None,
            pod_id: Some(Arc::from("pod-9")),
            pool: None,
            node: Some(3),
            detail: Some(Detail::Backoff { attempts: 4, next_eligible_ms: 55_000 }),
        });
        let csv = to_csv(&trace);
        let re = from_csv(&csv).unwrap();
        assert_eq!(re, trace);
        assert_eq!(to_csv(&re), csv);
        assert_eq!(trace_hash(&trace), trace_hash(&re));
        assert_eq!(trace_hash(&trace).len(), 64);
    }

    #[test]
    fn pending_attempts_window_sees_preexisting_pods() {
        let mut trace = vec![TraceEvent {
            time_ms: 100,
            kind: TraceKind::PodPending,
            task_id: None,
            pod_id: Some(Arc::from("p")),
            pool: None,
            node: None,
            detail: Some(Detail::Backoff { attempts: 5, next_eligible_ms: 90_000 }),
        }];
        trace.push(ev(50_000, TraceKind::TaskReady, "a", "x"));
        assert_eq!(max_pending_attempts_during(&trace, 40_000, 60_000), 5);
        // Pod leaves pending before the window opens.
        trace.insert(
            1,
            TraceEvent {
                time_ms: 200,
                kind: TraceKind::PodScheduled,
                task_id: None,
                pod_id: Some(Arc::from("p")),
                pool: None,
                node: Some(0),
                detail: Some(Detail::Requests { cpu_m: 1000, mem_mb: 2048 }),
            },
        );
        assert_eq!(max_pending_attempts_during(&trace, 40_000, 60_000), 0);
    }

    #[test]
    fn utilization_sampling_tracks_allocation() {
        let trace = vec![
            ev(0, TraceKind::TaskReady, "a", "x"),
            TraceEvent {
                time_ms: 0,
                kind: TraceKind::PodScheduled,
                task_id: None,
                pod_id: Some(Arc::from("pod-a")),
                pool: None,
                node: Some(0),
                detail: Some(Detail::Requests { cpu_m: 2000, mem_mb: 2048 }),
            },
            ev(2000, TraceKind::TaskStarted, "a", "x"),
            ev(10_000, TraceKind::TaskCompleted, "a", "x"),
            TraceEvent {
                time_ms: 10_000,
                kind: TraceKind::PodCompleted,
                task_id: None,
                pod_id: Some(Arc::from("pod-a")),
                pool: None,
                node: Some(0),
                detail: None,
            },
        ];
        let samples = utilization_series(&trace, 5000, 4000);
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].time_ms, 0);
        assert!((samples[0].allocated_fraction - 0.5).abs() < 1e-12);
        assert_eq!(samples[1].running_tasks, 1);
        assert_eq!(samples[2].time_ms, 10_000);
        assert_eq!(samples[2].running_tasks, 0);
        assert!((samples[2].allocated_fraction).abs() < 1e-12);
    }
}
