//! Shared builders for integration tests: small deterministic random DAGs
//! and scenario configs for each execution model.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wfsim::cluster::{AdmissionConfig, BackoffPolicy, ClusterConfig, NodeGroup};
use wfsim::execmodels::{ClusteringRule, DefaultMode, ExecutionModelConfig, PoolSpec};
use wfsim::simulator::SimConfig;
use wfsim::workflow::{TaskSpec, WorkflowDag};

pub const TYPE_NAMES: [&str; 4] = ["alpha", "beta", "gamma", "delta"];

/// Random DAG with up to `max_tasks` tasks. Task requests always fit a
/// default node; runtimes span 0.5-20 s. Same seed, same DAG.
pub fn random_dag(seed: u64, max_tasks: usize) -> WorkflowDag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=max_tasks.max(5));
    let n_types = rng.random_range(1..=TYPE_NAMES.len());
    let cpu_choices = [250, 500, 1000, 2000];
    let mem_choices = [256, 512, 1024, 2048];
    let profiles: Vec<(u64, u64)> = (0..n_types)
        .map(|_| {
            (
                cpu_choices[rng.random_range(0..cpu_choices.len())],
                mem_choices[rng.random_range(0..mem_choices.len())],
            )
        })
        .collect();

    let mut tasks = Vec::with_capacity(n);
    for i in 0..n {
        let ty = rng.random_range(0..n_types);
        let max_parents = i.min(3);
        let k = if max_parents == 0 { 0 } else { rng.random_range(0..=max_parents) };
        let mut parents = Vec::new();
        for _ in 0..k {
            let p = rng.random_range(0..i);
            let id = format!("t{p:03}");
            if !parents.contains(&id) {
                parents.push(id);
            }
        }
        tasks.push(TaskSpec {
            id: format!("t{i:03}"),
            task_type: TYPE_NAMES[ty].to_string(),
            runtime_ms: rng.random_range(500..=20_000),
            cpu_request_millicores: profiles[ty].0,
            mem_request_mb: profiles[ty].1,
            parents,
        });
    }
    WorkflowDag::new(format!("random-{seed}"), tasks).expect("generated DAG is valid")
}

pub fn small_cluster(nodes: usize) -> ClusterConfig {
    ClusterConfig {
        nodes: NodeGroup { count: nodes, cpu_m: 4000, mem_mb: 16_384 },
        backoff: BackoffPolicy::default(),
        admission: AdmissionConfig::default(),
        pod_overhead_ms: 2000,
    }
}

pub fn job_config(name: &str, dag: Arc<WorkflowDag>, nodes: usize) -> SimConfig {
    let mut config = SimConfig::new(name, dag);
    config.cluster = small_cluster(nodes);
    config
}

/// ClusteredJob for every task type in the DAG, one rule per type.
pub fn clustered_config(
    name: &str,
    dag: Arc<WorkflowDag>,
    nodes: usize,
    size: usize,
    timeout_ms: u64,
) -> SimConfig {
    let mut config = SimConfig::new(name, dag.clone());
    config.cluster = small_cluster(nodes);
    config.model = ExecutionModelConfig {
        default_mode: DefaultMode::Job,
        clustering: dag
            .task_types()
            .into_iter()
            .map(|ty| ClusteringRule { match_task: vec![ty], size, timeout_ms })
            .collect(),
        pools: Vec::new(),
    };
    config
}

/// Worker pools for every task type; worker requests mirror the type's
/// task requests.
pub fn pool_config(name: &str, dag: Arc<WorkflowDag>, nodes: usize) -> SimConfig {
    let mut config = SimConfig::new(name, dag.clone());
    config.cluster = small_cluster(nodes);
    config.model = ExecutionModelConfig {
        default_mode: DefaultMode::Job,
        clustering: Vec::new(),
        pools: dag
            .task_types()
            .into_iter()
            .map(|ty| {
                let t = dag.tasks().iter().find(|t| t.task_type == ty).unwrap();
                PoolSpec {
                    task_type: ty,
                    cpu_m: t.cpu_request_millicores,
                    mem_mb: t.mem_request_mb,
                    overhead_ms: None,
                    min: 0,
                    max: None,
                    dequeue_latency_ms: 0,
                }
            })
            .collect(),
    };
    config
}

/// Mixed per-type assignment driven by the seed: job, clustered or pool.
pub fn mixed_config(name: &str, dag: Arc<WorkflowDag>, nodes: usize, seed: u64) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_7865);
    let mut config = SimConfig::new(name, dag.clone());
    config.cluster = small_cluster(nodes);
    let mut clustering = Vec::new();
    let mut pools = Vec::new();
    for ty in dag.task_types() {
        match rng.random_range(0..3) {
            0 => {}
            1 => clustering.push(ClusteringRule {
                match_task: vec![ty],
                size: rng.random_range(1..=8),
                timeout_ms: rng.random_range(0..=5000),
            }),
            _ => {
                let t = dag.tasks().iter().find(|t| t.task_type == ty).unwrap();
                pools.push(PoolSpec {
                    task_type: ty,
                    cpu_m: t.cpu_request_millicores,
                    mem_mb: t.mem_request_mb,
                    overhead_ms: None,
                    min: 0,
                    max: None,
                    dequeue_latency_ms: 0,
                });
            }
        }
    }
    config.model = ExecutionModelConfig { default_mode: DefaultMode::Job, clustering, pools };
    config
}
