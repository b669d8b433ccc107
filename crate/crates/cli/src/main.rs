//! wfsim: generate workloads, run scenarios, sweep clustering parameters,
//! compare execution models, and render charts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation error,
//! 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use wfsim::error::{SimError, WorkflowError};
use wfsim::execmodels::{ClusteringRule, DefaultMode, ExecutionModelConfig, PoolSpec};
use wfsim::metrics::{self, ExportFormat};
use wfsim::scenario::ScenarioFile;
use wfsim::simulator::{self, SimConfig, SimResult};
use wfsim::workflow::{generate_montage, MontageParams, WorkflowDag};

#[derive(Parser)]
#[command(
    name = "wfsim",
    version,
    about = "Discrete-event simulator for workflow execution models on a Kubernetes-like cluster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed override (generate/compare: generator seed; run/sweep: scenario seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory. Defaults to $WFSIM_OUT, then ./out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Artifact formats: csv, json, gantt-image, utilization-image.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Montage-shaped workflow file (5N tasks from N inputs).
    Generate {
        /// Number of input images; must be >= 4.
        #[arg(short, long)]
        n: u64,
        /// Output file; defaults to `<out>/montage-<n>.json`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run one scenario file and write trace, metrics and charts.
    Run { scenario: PathBuf },
    /// Run a grid of clustering parameters over a ClusteredJob scenario.
    Sweep {
        scenario: PathBuf,
        /// Batch sizes to try.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Batch timeouts (ms) to try.
        #[arg(long, value_delimiter = ',', default_value = "3000")]
        timeouts: Vec<u64>,
    },
    /// Compare the job, clustered and worker-pool models on one workflow.
    Compare {
        /// Workflow file to run; mutually exclusive with --n.
        #[arg(long, conflicts_with = "n")]
        workflow: Option<PathBuf>,
        /// Generate a Montage workflow with this many inputs instead.
        #[arg(long)]
        n: Option<u64>,
    },
    /// Re-render a chart from a saved trace.csv.
    Plot {
        trace: PathBuf,
        /// gantt-image or utilization-image.
        #[arg(long, default_value = "gantt-image")]
        chart: String,
        /// Output file; defaults to `<out>/<chart>.svg`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Capacity line for utilization panels; defaults to the trace peak.
        #[arg(long)]
        capacity: Option<u32>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn io(message: impl std::fmt::Display) -> Self {
        Self { code: 4, message: message.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Config(_) => 2,
            SimError::Workflow(WorkflowError::Io(_)) => 4,
            SimError::Workflow(_) => 2,
            SimError::Deadlock { .. }
            | SimError::MaxSimTimeExceeded { .. }
            | SimError::Cluster(_)
            | SimError::IncompleteTrace(_) => 3,
            SimError::Io(_) => 4,
        };
        let message = match &e {
            SimError::Deadlock { stuck } => {
                let mut lines = vec![e.to_string()];
                for s in stuck.iter().take(10) {
                    lines.push(format!("  stuck: {} — {}", s.task_id, s.state));
                }
                if stuck.len() > 10 {
                    lines.push(format!("  ... and {} more", stuck.len() - 10));
                }
                lines.join("\n")
            }
            _ => e.to_string(),
        };
        Self { code, message }
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        Failure::from(SimError::from(e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Generate { n, output } => cmd_generate(&cli, *n, output.clone()),
        Command::Run { scenario } => cmd_run(&cli, scenario),
        Command::Sweep { scenario, sizes, timeouts } => cmd_sweep(&cli, scenario, sizes, timeouts),
        Command::Compare { workflow, n } => cmd_compare(&cli, workflow.clone(), *n),
        Command::Plot { trace, chart, output, capacity } => {
            cmd_plot(&cli, trace, chart, output.clone(), *capacity)
        }
    }
}

fn out_dir(cli_out: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = cli_out
        .clone()
        .or_else(|| std::env::var_os("WFSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(Failure::io)?;
    Ok(dir)
}

fn formats(cli: &Cli) -> Result<Vec<ExportFormat>, Failure> {
    if cli.format.is_empty() {
        return Ok(vec![
            ExportFormat::Csv,
            ExportFormat::Json,
            ExportFormat::GanttImage,
            ExportFormat::UtilizationImage,
        ]);
    }
    cli.format
        .iter()
        .map(|s| s.parse::<ExportFormat>().map_err(Failure::config))
        .collect()
}

fn cmd_generate(cli: &Cli, n: u64, output: Option<PathBuf>) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(0);
    let dag = generate_montage(&MontageParams::new(n, seed))?;
    let path = match output {
        Some(p) => p,
        None => out_dir(&cli.out)?.join(format!("montage-{n}.json")),
    };
    dag.save(&path)?;
    println!("wrote {} ({} tasks, seed {seed})", path.display(), dag.len());
    Ok(())
}

fn load_scenario(cli: &Cli, path: &Path) -> Result<SimConfig, Failure> {
    let scenario = ScenarioFile::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut config = scenario.to_sim_config(base)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_artifacts(result: &SimResult, dir: &Path, formats: &[ExportFormat]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(Failure::io)?;
    for format in formats {
        result.export(*format, dir.join(format.file_name()))?;
    }
    Ok(())
}

fn summary_line(result: &SimResult) -> String {
    format!(
        "name={} makespan_ms={} mean_running={:.2} mean_utilization={:.3} max_running={} slot_capacity={} trace_hash={}",
        result.name,
        result.makespan_ms,
        result.mean_running(),
        result.mean_running() / result.slot_capacity.max(1) as f64,
        result.max_running(),
        result.slot_capacity,
        &result.trace_hash()[..16],
    )
}

fn cmd_run(cli: &Cli, scenario: &Path) -> Result<(), Failure> {
    let config = load_scenario(cli, scenario)?;
    let result = simulator::run(&config)?;
    let dir = out_dir(&cli.out)?.join(&result.name);
    write_artifacts(&result, &dir, &formats(cli)?)?;
    println!("{}", summary_line(&result));
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, scenario: &Path, sizes: &[usize], timeouts: &[u64]) -> Result<(), Failure> {
    if sizes.is_empty() || timeouts.is_empty() {
        return Err(Failure::config("sweep grid is empty: provide --sizes and --timeouts"));
    }
    let base = load_scenario(cli, scenario)?;
    if base.model.clustering.is_empty() {
        return Err(Failure::config(
            "model.clustering: sweep needs a base scenario with clustering rules",
        ));
    }

    let mut rows: Vec<(usize, u64, Result<SimResult, SimError>)> = Vec::new();
    for &size in sizes {
        for &timeout_ms in timeouts {
            if size == 0 {
                let err = wfsim::error::ConfigError::new("sweep.sizes", "size must be >= 1");
                rows.push((size, timeout_ms, Err(SimError::Config(err))));
                continue;
            }
            let mut config = base.clone();
            config.name = format!("{}-size{}-t{}", base.name, size, timeout_ms);
            for rule in &mut config.model.clustering {
                rule.size = size;
                rule.timeout_ms = timeout_ms;
            }
            rows.push((size, timeout_ms, simulator::run(&config)));
        }
    }

    rows.sort_by_key(|(s, t, r)| (r.as_ref().map(|x| x.makespan_ms).unwrap_or(u64::MAX), *s, *t));
    let mut csv = String::from("size,timeout_ms,makespan_ms,mean_running,stalls_60s\n");
    println!(
        "{:<6} {:<10} {:<12} {:<13} {:<11} best",
        "size", "timeout_ms", "makespan_ms", "mean_running", "stalls>=60s"
    );
    let mut any_ok = false;
    for (i, (size, timeout_ms, outcome)) in rows.iter().enumerate() {
        match outcome {
            Ok(r) => {
                let best = if i == 0 && !any_ok { "*" } else { "" };
                any_ok = true;
                println!(
                    "{:<6} {:<10} {:<12} {:<13.2} {:<11} {}",
                    size,
                    timeout_ms,
                    r.makespan_ms,
                    r.mean_running(),
                    r.stall_intervals(60_000).len(),
                    best
                );
                csv.push_str(&format!(
                    "{},{},{},{:.2},{}\n",
                    size,
                    timeout_ms,
                    r.makespan_ms,
                    r.mean_running(),
                    r.stall_intervals(60_000).len()
                ));
            }
            Err(e) => {
                println!("{size:<6} {timeout_ms:<10} error: {e}");
                csv.push_str(&format!("{size},{timeout_ms},error,,\n"));
            }
        }
    }
    let path = out_dir(&cli.out)?.join("sweep.csv");
    std::fs::write(&path, csv).map_err(Failure::io)?;
    println!("wrote {}", path.display());
    if !any_ok {
        return Err(Failure { code: 3, message: "every sweep cell failed".into() });
    }
    Ok(())
}

/// Task types wide enough for a worker pool (or clustering rule) in the
/// generated comparison: at least four tasks of the type.
fn wide_types(dag: &WorkflowDag) -> Vec<String> {
    dag.task_types()
        .into_iter()
        .filter(|ty| dag.tasks().iter().filter(|t| &t.task_type == ty).count() >= 4)
        .collect()
}

fn cmd_compare(cli: &Cli, workflow: Option<PathBuf>, n: Option<u64>) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(1);
    let dag = Arc::new(match (workflow, n) {
        (Some(path), None) => WorkflowDag::load_path(&path)?,
        (None, Some(n)) => generate_montage(&MontageParams::new(n, seed))?,
        (None, None) => {
            return Err(Failure::config("compare needs --workflow <file> or --n <inputs>"))
        }
        _ => unreachable!("clap enforces exclusivity"),
    });
    let wide = wide_types(&dag);

    let mut job = SimConfig::new("job", dag.clone());
    job.seed = seed;
    let job_result = simulator::run(&job)?;

    // Best documented clustering: batch sizes 5 and 20, timeout 3000 ms,
    // over the wide stages.
    let mut best_clustered: Option<SimResult> = None;
    for size in [5usize, 20] {
        let mut config = SimConfig::new(format!("clustered-{size}"), dag.clone());
        config.seed = seed;
        config.model = ExecutionModelConfig {
            default_mode: DefaultMode::Job,
            clustering: wide
                .iter()
                .map(|ty| ClusteringRule { match_task: vec![ty.clone()], size, timeout_ms: 3000 })
                .collect(),
            pools: Vec::new(),
        };
        let result = simulator::run(&config)?;
        if best_clustered.as_ref().is_none_or(|b| result.makespan_ms < b.makespan_ms) {
            best_clustered = Some(result);
        }
    }
    let clustered_result = best_clustered.expect("two grid points ran");

    let mut pools = SimConfig::new("worker-pools", dag.clone());
    pools.seed = seed;
    pools.model = ExecutionModelConfig {
        default_mode: DefaultMode::Job,
        clustering: Vec::new(),
        pools: wide
            .iter()
            .map(|ty| {
                let t = dag.tasks().iter().find(|t| &t.task_type == ty).unwrap();
                PoolSpec {
                    task_type: ty.clone(),
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
    let pool_result = simulator::run(&pools)?;

    println!(
        "{:<16} {:<12} {:<13} {:<12} stalls>=60s",
        "model", "makespan_ms", "mean_running", "max_running"
    );
    for r in [&pool_result, &clustered_result, &job_result] {
        println!(
            "{:<16} {:<12} {:<13.2} {:<12} {}",
            r.name,
            r.makespan_ms,
            r.mean_running(),
            r.max_running(),
            r.stall_intervals(60_000).len()
        );
    }
    let ratio_pool = pool_result.makespan_ms as f64 / clustered_result.makespan_ms as f64;
    let ratio_clustered = clustered_result.makespan_ms as f64 / job_result.makespan_ms as f64;
    println!("ratio worker-pools/{} = {ratio_pool:.3}", clustered_result.name);
    println!("ratio {}/job = {ratio_clustered:.3}", clustered_result.name);

    let dir = out_dir(&cli.out)?;
    let report = serde_json::json!({
        "seed": seed,
        "workflow": dag.name(),
        "tasks": dag.len(),
        "models": [pool_result.summary(), clustered_result.summary(), job_result.summary()],
        "ratio_worker_pools_over_clustered": ratio_pool,
        "ratio_clustered_over_job": ratio_clustered,
    });
    let report_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    std::fs::write(&report_path, text).map_err(Failure::io)?;

    let chart = metrics::charts::comparison_svg(&[
        (&pool_result.name, &pool_result.trace, pool_result.slot_capacity as u32),
        (&clustered_result.name, &clustered_result.trace, clustered_result.slot_capacity as u32),
        (&job_result.name, &job_result.trace, job_result.slot_capacity as u32),
    ]);
    let chart_path = dir.join("compare.svg");
    std::fs::write(&chart_path, chart).map_err(Failure::io)?;
    println!("wrote {} and {}", report_path.display(), chart_path.display());
    Ok(())
}

fn cmd_plot(
    cli: &Cli,
    trace_path: &Path,
    chart: &str,
    output: Option<PathBuf>,
    capacity: Option<u32>,
) -> Result<(), Failure> {
    let format: ExportFormat = chart.parse().map_err(Failure::config)?;
    let text = std::fs::read_to_string(trace_path).map_err(Failure::io)?;
    let trace = metrics::from_csv(&text)?;
    let capacity = capacity.unwrap_or_else(|| metrics::max_running(&trace).max(1));
    let title = trace_path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let svg = match format {
        ExportFormat::GanttImage => metrics::charts::gantt_svg(&trace, title, capacity),
        ExportFormat::UtilizationImage => metrics::charts::utilization_svg(&trace, title, capacity),
        _ => return Err(Failure::config("plot renders gantt-image or utilization-image")),
    };
    let path = match output {
        Some(p) => p,
        None => out_dir(&cli.out)?.join(format.file_name()),
    };
    std::fs::write(&path, svg).map_err(Failure::io)?;
    println!("wrote {}", path.display());
    Ok(())
}
