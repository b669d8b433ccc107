//! End-to-end tests of the wfsim binary: exit codes, artifacts, and
//! flag-for-flag reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn wfsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("WFSIM_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, content: &str) {
    std::fs::write(dir.join(name), content).unwrap();
}

const SMALL_WORKFLOW: &str = r#"{
  "name": "smoke",
  "tasks": [
    {"id": "a1", "type": "alpha", "runtime_ms": 2000, "cpu_m": 1000, "mem_mb": 2048, "parents": []},
    {"id": "a2", "type": "alpha", "runtime_ms": 2000, "cpu_m": 1000, "mem_mb": 2048, "parents": []},
    {"id": "a3", "type": "alpha", "runtime_ms": 2000, "cpu_m": 1000, "mem_mb": 2048, "parents": []},
    {"id": "a4", "type": "alpha", "runtime_ms": 2000, "cpu_m": 1000, "mem_mb": 2048, "parents": []},
    {"id": "z", "type": "omega", "runtime_ms": 1000, "cpu_m": 1000, "mem_mb": 2048, "parents": ["a1", "a2", "a3", "a4"]}
  ]
}"#;

fn clustered_scenario(workflow: &str) -> String {
    format!(
        r#"{{
  "name": "smoke-clustered",
  "seed": 3,
  "workflow": {{ "path": "{workflow}" }},
  "cluster": {{ "nodes": {{ "count": 2, "cpu_m": 4000, "mem_mb": 16384 }} }},
  "model": {{
    "defaultMode": "job",
    "clustering": [{{ "matchTask": ["alpha"], "size": 2, "timeoutMs": 3000 }}]
  }}
}}"#
    )
}

#[test]
fn generate_is_reproducible_and_validates_n() {
    let dir = tempfile::tempdir().unwrap();
    let ok = wfsim(&["generate", "--n", "8", "--seed", "5", "--out", "g1"], dir.path());
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("40 tasks"));
    let again = wfsim(&["generate", "--n", "8", "--seed", "5", "--out", "g2"], dir.path());
    assert!(again.status.success());
    let a = std::fs::read(dir.path().join("g1/montage-8.json")).unwrap();
    let b = std::fs::read(dir.path().join("g2/montage-8.json")).unwrap();
    assert_eq!(a, b, "same flags and seed must give identical files");

    let bad = wfsim(&["generate", "--n", "2"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("n_inputs"), "{}", stderr(&bad));
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "wf.json", SMALL_WORKFLOW);
    write(dir.path(), "scenario.json", &clustered_scenario("wf.json"));

    for out in ["r1", "r2"] {
        let run = wfsim(&["run", "scenario.json", "--out", out], dir.path());
        assert!(run.status.success(), "{}", stderr(&run));
        assert!(stdout(&run).contains("makespan_ms="));
        assert!(stdout(&run).contains("mean_utilization="));
    }
    for name in ["trace.csv", "result.json", "gantt.svg", "utilization.svg"] {
        let a = std::fs::read(dir.path().join("r1/smoke-clustered").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("r2/smoke-clustered").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn malformed_scenario_exits_2_with_field_context() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"name": "x", "workflow": {}, "sheduler": 1}"#);
    let out = wfsim(&["run", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sheduler"), "{}", stderr(&out));

    write(dir.path(), "empty-src.json", r#"{"name": "x", "workflow": {}}"#);
    let out = wfsim(&["run", "empty-src.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("workflow"), "{}", stderr(&out));
}

#[test]
fn deadlocked_scenario_exits_3_naming_stuck_tasks() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "wf.json",
        r#"{
  "name": "stuck",
  "tasks": [{"id": "huge", "type": "x", "runtime_ms": 1000, "cpu_m": 64000, "mem_mb": 2048, "parents": []}]
}"#,
    );
    write(
        dir.path(),
        "scenario.json",
        r#"{"name": "stuck", "workflow": {"path": "wf.json"}}"#,
    );
    let out = wfsim(&["run", "scenario.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("deadlock") && err.contains("huge"), "{err}");
}

#[test]
fn sweep_emits_sorted_table_and_size_one_matches_job_model() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "wf.json", SMALL_WORKFLOW);
    write(dir.path(), "scenario.json", &clustered_scenario("wf.json"));
    // A job-mode twin of the same workflow.
    write(
        dir.path(),
        "job.json",
        r#"{
  "name": "smoke-job",
  "seed": 3,
  "workflow": { "path": "wf.json" },
  "cluster": { "nodes": { "count": 2, "cpu_m": 4000, "mem_mb": 16384 } }
}"#,
    );

    let sweep = wfsim(
        &["sweep", "scenario.json", "--sizes", "1,2", "--timeouts", "3000", "--out", "s"],
        dir.path(),
    );
    assert!(sweep.status.success(), "{}", stderr(&sweep));
    let table = stdout(&sweep);
    assert!(table.contains('*'), "best row marked: {table}");
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "header + 2 rows: {csv}");

    let size1_makespan: u64 = csv
        .lines()
        .find(|l| l.starts_with("1,"))
        .and_then(|l| l.split(',').nth(2))
        .unwrap()
        .parse()
        .unwrap();
    let run = wfsim(&["run", "job.json", "--out", "j", "--format", "csv"], dir.path());
    assert!(run.status.success(), "{}", stderr(&run));
    let job_makespan: u64 = stdout(&run)
        .split("makespan_ms=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(size1_makespan, job_makespan, "size-1 clustering equals the job model");

    let no_rules = wfsim(&["sweep", "job.json", "--sizes", "2"], dir.path());
    assert_eq!(no_rules.status.code(), Some(2));
    assert!(stderr(&no_rules).contains("clustering"), "{}", stderr(&no_rules));

    // A grid needs sizes at all.
    let no_grid = wfsim(&["sweep", "scenario.json"], dir.path());
    assert_eq!(no_grid.status.code(), Some(2));
}

#[test]
fn compare_on_single_task_dag_gives_equal_makespans() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "one.json",
        r#"{
  "name": "one",
  "tasks": [{"id": "t", "type": "solo", "runtime_ms": 10000, "cpu_m": 1000, "mem_mb": 2048, "parents": []}]
}"#,
    );
    let out = wfsim(&["compare", "--workflow", "one.json", "--out", "c"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let makespans: Vec<u64> = text
        .lines()
        .filter(|l| {
            l.starts_with("worker-pools") || l.starts_with("clustered") || l.starts_with("job")
        })
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(makespans.len(), 3, "{text}");
    assert!(
        makespans.iter().all(|&m| m == makespans[0]),
        "no parallelism to exploit, expected equal makespans: {makespans:?}"
    );
    assert!(dir.path().join("c/report.json").exists());
    assert!(dir.path().join("c/compare.svg").exists());
}

#[test]
fn plot_renders_charts_from_saved_traces() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "wf.json", SMALL_WORKFLOW);
    write(dir.path(), "scenario.json", &clustered_scenario("wf.json"));
    let run = wfsim(&["run", "scenario.json", "--out", "r"], dir.path());
    assert!(run.status.success(), "{}", stderr(&run));

    let trace = "r/smoke-clustered/trace.csv";
    let plot = wfsim(
        &["plot", trace, "--chart", "utilization-image", "--output", "u.svg"],
        dir.path(),
    );
    assert!(plot.status.success(), "{}", stderr(&plot));
    let svg = std::fs::read_to_string(dir.path().join("u.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));

    let bad = wfsim(&["plot", trace, "--chart", "piechart"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wfsim"))
        .args(["generate", "--n", "4"])
        .current_dir(dir.path())
        .env("WFSIM_OUT", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("20 tasks"), "5N tasks for N=4: {}", stdout(&out));
    assert!(dir.path().join("from-env/montage-4.json").exists());
}

#[test]
fn generate_at_full_scale_yields_16000_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let out = wfsim(&["generate", "--n", "3200", "--seed", "1", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("16000 tasks"), "{}", stdout(&out));
}
