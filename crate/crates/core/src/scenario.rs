//! Scenario files: one JSON document combining the workload (a workflow
//! file reference or generator parameters), cluster shape, execution model,
//! scaler settings and seed. Parsing is strict and validation errors carry
//! the path of the offending field.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autoscaler::ScalerConfig;
use crate::cluster::ClusterConfig;
use crate::error::{ConfigError, SimError};
use crate::execmodels::{ClusteringRule, DefaultMode, ExecutionModelConfig, PoolSpec};
use crate::simulator::{SimConfig, TraceVerbosity};
use crate::workflow::{generate_montage, MontageParams, WorkflowDag};

/// Where the workload comes from: a workflow file or generator parameters.
/// Exactly one must be set.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<MontageParams>,
}

/// Execution-model block: clustering rules in the standard wire shape plus
/// the default mode for unmatched types. Worker pools are configured in
/// the scaler block.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    #[serde(rename = "defaultMode")]
    pub default_mode: DefaultMode,
    pub clustering: Vec<ClusteringRule>,
}

/// Scaler block: tick interval, scale-down stabilization, and the worker
/// pool shapes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScalerBlock {
    pub interval_ms: u64,
    pub stabilization_ms: u64,
    pub pools: Vec<PoolSpec>,
}

impl Default for ScalerBlock {
    fn default() -> Self {
        let d = ScalerConfig::default();
        Self { interval_ms: d.interval_ms, stabilization_ms: d.stabilization_ms, pools: Vec::new() }
    }
}

fn default_max_sim_time() -> u64 {
    86_400_000
}

/// The on-disk scenario document. Round-trips losslessly through JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub workflow: WorkflowSource,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub scaler: ScalerBlock,
    #[serde(default)]
    pub engine_latency_ms: u64,
    #[serde(default = "default_max_sim_time")]
    pub max_sim_time_ms: u64,
    #[serde(default)]
    pub trace: TraceVerbosity,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let scenario: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| ConfigError::new("scenario", e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(&path)?;
        Ok(Self::from_json(&text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.workflow.path, &self.workflow.generate) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "workflow",
                    "set either `path` or `generate`, not both",
                ))
            }
            (None, None) => {
                return Err(ConfigError::new("workflow", "one of `path` or `generate` required"))
            }
            _ => {}
        }
        if let Some(params) = &self.workflow.generate {
            if params.n_inputs < 4 {
                return Err(ConfigError::new("workflow.generate.n_inputs", "must be >= 4"));
            }
        }
        for (i, pool) in self.scaler.pools.iter().enumerate() {
            if pool.task_type.is_empty() {
                return Err(ConfigError::new(
                    format!("scaler.pools[{i}].type"),
                    "must name a task type",
                ));
            }
        }
        Ok(())
    }

    /// Materializes the scenario: loads or generates the workflow (paths
    /// resolve relative to `base_dir`) and assembles the runnable config.
    pub fn to_sim_config(&self, base_dir: &Path) -> Result<SimConfig, SimError> {
        let workflow = match (&self.workflow.path, &self.workflow.generate) {
            (Some(p), None) => {
                let path = base_dir.join(p);
                WorkflowDag::load_path(&path)?
            }
            (None, Some(params)) => generate_montage(params)?,
            _ => unreachable!("validated"),
        };
        let model = ExecutionModelConfig {
            default_mode: self.model.default_mode,
            clustering: self.model.clustering.clone(),
            pools: self.scaler.pools.clone(),
        };
        let config = SimConfig {
            name: self.name.clone(),
            workflow: Arc::new(workflow),
            cluster: self.cluster.clone(),
            model,
            scaler: ScalerConfig {
                interval_ms: self.scaler.interval_ms,
                stabilization_ms: self.scaler.stabilization_ms,
            },
            seed: self.seed,
            engine_latency_ms: self.engine_latency_ms,
            max_sim_time_ms: self.max_sim_time_ms,
            trace: self.trace,
        };
        config.validate()?;
        Ok(config)
    }
}
