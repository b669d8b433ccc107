//! Workflow DAGs: task specifications, file loading, readiness resolution.
//!
//! A workflow is an acyclic graph of typed tasks. Task order as listed in
//! the source file is preserved everywhere, so that iteration (and thus
//! simulation) is deterministic.

mod montage;

pub use montage::{
    generate_montage, MontageParams, RequestProfile, RuntimeModel, MADD, MBACKGROUND, MBGMODEL,
    MCONCATFIT, MDIFFFIT, MIMGTBL, MJPEG, MPROJECT, MSHRINK, PARALLEL_TYPES,
};

use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::WorkflowError;

/// Index of a task within its DAG's task list.
pub type TaskIdx = usize;

/// A single workflow task: what it is, how long it runs, what it needs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    #[serde(rename = "type")]
    pub task_type: String,
    pub runtime_ms: u64,
    #[serde(rename = "cpu_m")]
    pub cpu_request_millicores: u64,
    #[serde(rename = "mem_mb")]
    pub mem_request_mb: u64,
    #[serde(default)]
    pub parents: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkflowFile {
    name: String,
    tasks: Vec<TaskSpec>,
}

/// A validated workflow DAG. Immutable after construction.
#[derive(Debug, Clone)]
pub struct WorkflowDag {
    name: String,
    tasks: Vec<TaskSpec>,
    index: HashMap<String, TaskIdx>,
    parents: Vec<Vec<TaskIdx>>,
    children: Vec<Vec<TaskIdx>>,
}

impl WorkflowDag {
    /// Builds a DAG from a task list, validating ids, references, resource
    /// requests and acyclicity.
    pub fn new(name: impl Into<String>, tasks: Vec<TaskSpec>) -> Result<Self, WorkflowError> {
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.id.clone(), i).is_some() {
                return Err(WorkflowError::DuplicateId(t.id.clone()));
            }
            if t.cpu_request_millicores == 0 || t.mem_request_mb == 0 {
                return Err(WorkflowError::InvalidTask {
                    task: t.id.clone(),
                    reason: "resource requests must be > 0".into(),
                });
            }
        }
        let mut parents = vec![Vec::new(); tasks.len()];
        let mut children = vec![Vec::new(); tasks.len()];
        for (i, t) in tasks.iter().enumerate() {
            let mut seen = HashSet::new();
            for p in &t.parents {
                let &pi = index.get(p).ok_or_else(|| WorkflowError::DanglingParent {
                    task: t.id.clone(),
                    parent: p.clone(),
                })?;
                if seen.insert(pi) {
                    parents[i].push(pi);
                    children[pi].push(i);
                }
            }
        }
        let dag = Self { name: name.into(), tasks, index, parents, children };
        dag.check_acyclic()?;
        Ok(dag)
    }

    /// Kahn's algorithm in file order; names a task on the cycle if one exists.
    fn check_acyclic(&self) -> Result<Vec<TaskIdx>, WorkflowError> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: Vec<TaskIdx> =
            (0..self.tasks.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.tasks.len());
        let mut head = 0;
        while head < queue.len() {
            let i = queue[head];
            head += 1;
            order.push(i);
            for &c in &self.children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if order.len() != self.tasks.len() {
            let stuck = (0..self.tasks.len())
                .find(|&i| indeg[i] > 0)
                .expect("cycle implies a task with remaining in-degree");
            return Err(WorkflowError::Cycle(self.tasks[stuck].id.clone()));
        }
        Ok(order)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, idx: TaskIdx) -> &TaskSpec {
        &self.tasks[idx]
    }

    pub fn task_idx(&self, id: &str) -> Option<TaskIdx> {
        self.index.get(id).copied()
    }

    pub fn parent_idxs(&self, idx: TaskIdx) -> &[TaskIdx] {
        &self.parents[idx]
    }

    pub fn child_idxs(&self, idx: TaskIdx) -> &[TaskIdx] {
        &self.children[idx]
    }

    /// Tasks with no parents, in file order.
    pub fn roots(&self) -> Vec<TaskIdx> {
        (0..self.tasks.len()).filter(|&i| self.parents[i].is_empty()).collect()
    }

    /// Distinct task types in order of first appearance.
    pub fn task_types(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in &self.tasks {
            if seen.insert(t.task_type.as_str()) {
                out.push(t.task_type.clone());
            }
        }
        out
    }

    /// Exactly the tasks not in `completed` whose parents all are, in file
    /// order. Errors on ids that do not belong to this DAG.
    pub fn ready_tasks(&self, completed: &HashSet<String>) -> Result<Vec<&str>, WorkflowError> {
        let mut done = vec![false; self.tasks.len()];
        for id in completed {
            let &i = self
                .index
                .get(id.as_str())
                .ok_or_else(|| WorkflowError::UnknownTask(id.clone()))?;
            done[i] = true;
        }
        Ok((0..self.tasks.len())
            .filter(|&i| !done[i] && self.parents[i].iter().all(|&p| done[p]))
            .map(|i| self.tasks[i].id.as_str())
            .collect())
    }

    /// Length in milliseconds of the longest runtime-weighted path. This is
    /// a lower bound on any makespan, ignoring resources and overheads.
    pub fn critical_path_ms(&self) -> u64 {
        let order = self.check_acyclic().expect("validated at construction");
        let mut finish = vec![0u64; self.tasks.len()];
        let mut best = 0;
        for &i in &order {
            let start = self.parents[i].iter().map(|&p| finish[p]).max().unwrap_or(0);
            finish[i] = start + self.tasks[i].runtime_ms;
            best = best.max(finish[i]);
        }
        best
    }

    /// Parses and validates a workflow from its JSON file format.
    pub fn load(mut source: impl Read) -> Result<Self, WorkflowError> {
        let mut buf = String::new();
        source.read_to_string(&mut buf)?;
        let file: WorkflowFile =
            serde_json::from_str(&buf).map_err(|e| WorkflowError::Parse(e.to_string()))?;
        Self::new(file.name, file.tasks)
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self, WorkflowError> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }

    /// Serializes to the workflow JSON file format. Output is byte-stable
    /// for a given DAG.
    pub fn to_json(&self) -> String {
        let file = WorkflowFile { name: self.name.clone(), tasks: self.tasks.clone() };
        let mut s = serde_json::to_string_pretty(&file).expect("workflow serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), WorkflowError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Convenience wrapper matching the operation name used elsewhere.
pub fn load_workflow(source: impl Read) -> Result<WorkflowDag, WorkflowError> {
    WorkflowDag::load(source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, parents: &[&str]) -> TaskSpec {
        TaskSpec {
            id: id.into(),
            task_type: "mAdd".into(),
            runtime_ms: 1000,
            cpu_request_millicores: 1000,
            mem_request_mb: 2048,
            parents: parents.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn diamond() -> WorkflowDag {
        WorkflowDag::new(
            "diamond",
            vec![
                task("t1", &[]),
                task("t2", &["t1"]),
                task("t3", &["t1"]),
                task("t4", &["t2", "t3"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_task_loads() {
        let json = r#"{"name":"w","tasks":[
            {"id":"t1","type":"mAdd","runtime_ms":1000,"cpu_m":1000,"mem_mb":2048,"parents":[]}
        ]}"#;
        let dag = load_workflow(json.as_bytes()).unwrap();
        assert_eq!(dag.len(), 1);
        assert!(dag.child_idxs(0).is_empty());
    }

    #[test]
    fn diamond_topology() {
        let dag = diamond();
        let order = dag.check_acyclic().unwrap();
        assert_eq!(order.first(), Some(&0));
        assert_eq!(order.last(), Some(&3));
    }

    #[test]
    fn cycle_is_reported_with_an_offending_id() {
        let err = WorkflowDag::new("c", vec![task("t1", &["t2"]), task("t2", &["t1"])])
            .unwrap_err();
        match err {
            WorkflowError::Cycle(id) => assert!(id == "t1" || id == "t2"),
            other => panic!("expected cycle error, got {other}"),
        }
    }

    #[test]
    fn duplicate_and_dangling_are_reported() {
        let err = WorkflowDag::new("d", vec![task("t1", &[]), task("t1", &[])]).unwrap_err();
        assert!(matches!(err, WorkflowError::DuplicateId(id) if id == "t1"));

        let err = WorkflowDag::new("d", vec![task("t1", &["nope"])]).unwrap_err();
        assert!(matches!(err, WorkflowError::DanglingParent { parent, .. } if parent == "nope"));
    }

    #[test]
    fn zero_request_is_rejected() {
        let mut t = task("t1", &[]);
        t.cpu_request_millicores = 0;
        let err = WorkflowDag::new("z", vec![t]).unwrap_err();
        assert!(matches!(err, WorkflowError::InvalidTask { .. }));
    }

    #[test]
    fn ready_tasks_on_diamond() {
        let dag = diamond();
        let none = HashSet::new();
        assert_eq!(dag.ready_tasks(&none).unwrap(), vec!["t1"]);

        let one: HashSet<String> = ["t1".to_string()].into();
        assert_eq!(dag.ready_tasks(&one).unwrap(), vec!["t2", "t3"]);

        let all: HashSet<String> =
            ["t1", "t2", "t3", "t4"].iter().map(|s| s.to_string()).collect();
        assert!(dag.ready_tasks(&all).unwrap().is_empty());

        let bogus: HashSet<String> = ["tX".to_string()].into();
        assert!(matches!(
            dag.ready_tasks(&bogus).unwrap_err(),
            WorkflowError::UnknownTask(id) if id == "tX"
        ));
    }

    #[test]
    fn ready_tasks_is_monotone() {
        // Adding a task to `completed` never removes a previously ready task
        // other than that task itself.
        let dag = diamond();
        let mut completed: HashSet<String> = HashSet::new();
        for add in ["t1", "t2", "t3", "t4"] {
            let before: HashSet<String> =
                dag.ready_tasks(&completed).unwrap().iter().map(|s| s.to_string()).collect();
            completed.insert(add.to_string());
            let after: HashSet<String> =
                dag.ready_tasks(&completed).unwrap().iter().map(|s| s.to_string()).collect();
            for t in &before {
                assert!(after.contains(t) || t == add, "{t} vanished while incomplete");
            }
        }
    }

    #[test]
    fn load_serialize_roundtrip_is_identity() {
        let dag = diamond();
        let json = dag.to_json();
        let re = load_workflow(json.as_bytes()).unwrap();
        assert_eq!(re.to_json(), json);
        assert_eq!(re.tasks(), dag.tasks());
    }

    #[test]
    fn critical_path_of_diamond() {
        // 1000 + max(1000, 1000) + 1000
        assert_eq!(diamond().critical_path_ms(), 3000);
    }
}
