use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn xbar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xbar"))
        .args(args)
        .output()
        .expect("spawn xbar")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&read(dir, "manifest.json")).unwrap()
}

fn out(tmp: &TempDir, name: &str) -> String {
    tmp.path().join(name).display().to_string()
}

/// Three initiators hitting three targets; targets 1 and 2 are busy together.
const SMALL_TRACE: &str = "#xbar-trace v1,initiators=3,targets=3,horizon=400
0,60,1,1,req,0
10,60,2,2,req,0
100,20,3,3,req,0
200,60,1,1,req,0
205,60,2,2,req,0
300,30,3,3,req,0
";

fn small_trace(tmp: &TempDir) -> String {
    let path = tmp.path().join("small.csv");
    fs::write(&path, SMALL_TRACE).unwrap();
    path.display().to_string()
}

#[test]
fn gen_writes_trace_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = out(&tmp, "gen");
    let o = xbar(&["gen", "--preset", "hotspot", "--seed", "9", "--out-dir", &dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = Path::new(&dir);
    assert!(read(dir, "trace.csv").starts_with("#xbar-trace v1,"));
    assert!(read(dir, "generator.cfg").contains("seed=9"));
    let m = manifest(dir);
    assert_eq!(m["command"], "gen");
    assert_eq!(m["status"], "ok");
}

#[test]
fn analyze_writes_matrices() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    let dir = out(&tmp, "an");
    let o = xbar(&["analyze", "--trace", &trace, "--window-size", "100", "--out-dir", &dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = Path::new(&dir);
    let comm = read(dir, "comm.csv");
    assert_eq!(comm.lines().next(), Some("target,w1,w2,w3,w4"));
    assert_eq!(comm.lines().nth(1), Some("1,60,0,60,0"));
    let om = read(dir, "om.csv");
    assert_eq!(om.lines().nth(1), Some("1,120,105,0"));
    let conflict = read(dir, "conflict.csv");
    assert_eq!(conflict.lines().nth(1), Some("1,0,1,0"));
    assert_eq!(manifest(dir)["artifacts"].as_array().unwrap().len(), 4);
}

#[test]
fn design_separates_busy_targets() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    let dir = out(&tmp, "de");
    let o = xbar(&["design", "--trace", &trace, "--window-size", "100", "--out-dir", &dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = Path::new(&dir);
    let report: Value = serde_json::from_str(&read(dir, "solve_report.json")).unwrap();
    let binding: Vec<u64> = report["binding"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(binding.len(), 3);
    assert_ne!(binding[0], binding[1]);
    assert_eq!(binding.iter().max(), Some(&2));
    let comparison = read(dir, "comparison.csv");
    let rows: Vec<&str> = comparison.lines().collect();
    assert_eq!(rows[0], "config,bus_count,avg_latency,max_latency,size_ratio");
    assert!(rows[1].starts_with("shared,1,"));
    assert!(rows[2].starts_with("designed,2,"));
    assert!(rows[3].starts_with("full,3,"));
    assert_eq!(manifest(dir)["status"], "ok");
}

#[test]
fn single_target_needs_one_bus() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("one.csv");
    fs::write(
        &path,
        "#xbar-trace v1,initiators=2,targets=1,horizon=100\n0,40,1,1,req,0\n10,40,2,1,req,1\n",
    )
    .unwrap();
    let dir = out(&tmp, "de");
    let o = xbar(&[
        "design",
        "--trace",
        &path.display().to_string(),
        "--window-size",
        "50",
        "--out-dir",
        &dir,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&read(Path::new(&dir), "solve_report.json")).unwrap();
    assert_eq!(report["binding_string"], "1");
}

#[test]
fn csv_outputs_are_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let dir = out(&tmp, &format!("run{k}"));
        let o = xbar(&["design", "--preset", "mat2like", "--out-dir", &dir]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(dir);
    }
    for name in ["comm.csv", "om.csv", "conflict.csv", "comparison.csv", "solve_report.json", "manifest.json"] {
        assert_eq!(
            read(Path::new(&runs[0]), name),
            read(Path::new(&runs[1]), name),
            "{name} differs between runs"
        );
    }
}

#[test]
fn threshold_above_half_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    let o = xbar(&[
        "analyze",
        "--trace",
        &trace,
        "--window-size",
        "100",
        "--overlap-threshold",
        "0.6",
        "--out-dir",
        &out(&tmp, "bad"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("50%"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    assert_eq!(code(&xbar(&["design", "--trace", &trace, "--out-dir", &out(&tmp, "a")])), 1);
    assert_eq!(code(&xbar(&["design", "--out-dir", &out(&tmp, "b")])), 1);
    assert_eq!(code(&xbar(&["no-such-command"])), 1);
    assert_eq!(code(&xbar(&["--help"])), 0);
}

#[test]
fn too_few_buses_exit_two_with_partial_artifacts() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    let dir = out(&tmp, "inf");
    let o = xbar(&[
        "design",
        "--trace",
        &trace,
        "--window-size",
        "100",
        "--buses",
        "1",
        "--out-dir",
        &dir,
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = Path::new(&dir);
    assert!(dir.join("om.csv").exists());
    assert!(!dir.join("solve_report.json").exists());
    assert_eq!(manifest(dir)["status"], "infeasible");
}

#[test]
fn exhausted_budget_exits_three() {
    let tmp = TempDir::new().unwrap();
    let dir = out(&tmp, "lim");
    let o = xbar(&["design", "--preset", "uniform", "--node-limit", "5", "--out-dir", &dir]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = Path::new(&dir);
    assert!(dir.join("solve_report.json").exists());
    assert_eq!(manifest(dir)["status"], "limit");
}

#[test]
fn simulate_reports_latencies() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    let dir = out(&tmp, "sim");
    let o = xbar(&["simulate", "--trace", &trace, "--binding", "1,1,1", "--out-dir", &dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = Path::new(&dir);
    let lat = read(dir, "latencies.csv");
    let rows: Vec<&str> = lat.lines().collect();
    assert_eq!(rows[0], "index,start_cycle,initiator,target,latency,queuing");
    assert_eq!(rows[1], "1,0,1,1,60,0");
    assert_eq!(rows[2], "2,10,2,2,110,50");
    let report: Value = serde_json::from_str(&read(dir, "sim_report.json")).unwrap();
    assert_eq!(report["transactions"], 6);
    assert!(read(dir, "latency_histogram.csv").starts_with("latency,count\n"));

    let o = xbar(&["simulate", "--trace", &trace, "--binding", "1,2", "--out-dir", &out(&tmp, "x")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn window_sweep_single_size_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    let dir = out(&tmp, "sw");
    let o = xbar(&[
        "sweep-window",
        "--trace",
        &trace,
        "--window-size",
        "100",
        "--ws-list",
        "100",
        "--out-dir",
        &dir,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(Path::new(&dir), "sweep_window.csv");
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("100,2,"));
}

#[test]
fn threshold_sweep_conflicts_shrink() {
    let tmp = TempDir::new().unwrap();
    let dir = out(&tmp, "st");
    let o = xbar(&["sweep-threshold", "--preset", "mat2like", "--out-dir", &dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(Path::new(&dir), "sweep_threshold.csv");
    let counts: Vec<u64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 5);
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn compare_bindings_lists_each_random_binding() {
    let tmp = TempDir::new().unwrap();
    let dir = out(&tmp, "cb");
    let o = xbar(&["compare-bindings", "--preset", "mat2like", "--num-random", "4", "--out-dir", &dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(Path::new(&dir), "compare_bindings.csv");
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("optimal,"));
    assert!(rows[6].starts_with("random_mean,"));
}

#[test]
fn export_lp_has_named_rows() {
    let tmp = TempDir::new().unwrap();
    let trace = small_trace(&tmp);
    let dir = out(&tmp, "lp");
    let o = xbar(&["export-lp", "--trace", &trace, "--window-size", "100", "--out-dir", &dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lp = read(Path::new(&dir), "model.lp");
    for needle in ["Minimize", "Subject To", " one_1:", " bw_", " conf_", "Binaries", "End"] {
        assert!(lp.contains(needle), "missing {needle}");
    }

    let dir = out(&tmp, "lpf");
    let o = xbar(&[
        "export-lp",
        "--trace",
        &trace,
        "--window-size",
        "100",
        "--buses",
        "3",
        "--feasibility",
        "--out-dir",
        &dir,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!read(Path::new(&dir), "model.lp").contains("obj: maxov"));
}

#[test]
fn response_direction_reads_response_rows() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("resp.csv");
    fs::write(
        &path,
        "#xbar-trace v1,initiators=2,targets=2,horizon=200\n0,50,1,1,req,0\n60,50,1,2,resp,0\n70,50,2,1,resp,0\n",
    )
    .unwrap();
    let dir = out(&tmp, "resp");
    let o = xbar(&[
        "analyze",
        "--trace",
        &path.display().to_string(),
        "--direction",
        "resp",
        "--window-size",
        "200",
        "--out-dir",
        &dir,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let comm = read(Path::new(&dir), "comm.csv");
    assert_eq!(comm, "target,w1\n1,50\n2,50\n");
}
