//! Discrete-event simulator for scientific-workflow execution on a
//! Kubernetes-like cluster.
//!
//! The crate models a cluster of nodes with request-based pod placement,
//! a pending queue with exponential back-off, and an admission rate limit,
//! and executes workflow DAGs against it under three execution policies:
//!
//! * **Job** — one pod per workflow task, destroyed on completion.
//! * **ClusteredJob** — same-type tasks batched into one pod and executed
//!   sequentially inside it.
//! * **WorkerPool** — long-lived per-task-type worker pods consuming a
//!   dedicated FIFO queue, scaled by a queue-length autoscaler.
//!
//! Simulations are deterministic: the same scenario and seed produce a
//! bit-identical event trace on any host.

pub mod autoscaler;
pub mod cluster;
pub mod error;
pub mod execmodels;
pub mod metrics;
pub mod scenario;
pub mod simulator;
pub mod workflow;

pub use error::{ClusterError, ConfigError, SimError, WorkflowError};
pub use simulator::{SimConfig, SimResult};
pub use workflow::WorkflowDag;
