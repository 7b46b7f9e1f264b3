//! CSV and JSON renderings of flow results. Floats use fixed precision so
//! repeated runs produce identical bytes.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};
use xbar::flow::{BindingComparison, ThresholdSweepRow, WindowSweepRow};
use xbar::sim::{ComparisonRow, SimReport};
use xbar::solver::MinConfig;
use xbar::trace::Trace;
use xbar::window::{ConflictMatrix, OverlapMatrix, WindowProfile};

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

/// Quotes a free-text CSV field.
fn text(v: &Option<String>) -> String {
    match v {
        Some(s) => format!("\"{}\"", s.replace('"', "\"\"")),
        None => String::new(),
    }
}

fn matrix_header(n: usize, prefix: &str) -> String {
    let mut s = String::from("target");
    for j in 1..=n {
        let _ = write!(s, ",{prefix}{j}");
    }
    s.push('\n');
    s
}

pub fn comm_csv(p: &WindowProfile) -> String {
    let mut s = matrix_header(p.num_windows(), "w");
    for i in 0..p.num_targets() {
        let _ = write!(s, "{}", i + 1);
        for v in p.comm_row(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Pair overlaps; the diagonal holds each target's total busy cycles.
pub fn om_csv(om: &OverlapMatrix) -> String {
    let mut s = matrix_header(om.len(), "t");
    for (i, row) in om.rows().iter().enumerate() {
        let _ = write!(s, "{}", i + 1);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn conflict_csv(c: &ConflictMatrix) -> String {
    let n = c.len();
    let mut s = matrix_header(n, "t");
    for i in 0..n {
        let _ = write!(s, "{}", i + 1);
        for j in 0..n {
            let _ = write!(s, ",{}", u8::from(c.get(i, j)));
        }
        s.push('\n');
    }
    s
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("config,bus_count,avg_latency,max_latency,size_ratio\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.name,
            r.bus_count,
            f(r.avg_latency),
            r.max_latency,
            f(r.size_ratio)
        );
    }
    s
}

pub fn window_sweep_csv(rows: &[WindowSweepRow]) -> String {
    let mut s = String::from(
        "window_size,bus_count,avg_latency,max_latency,full_avg_latency,optimal,error\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.window_size,
            opt(&r.bus_count),
            r.avg_latency.map_or_else(String::new, f),
            opt(&r.max_latency),
            r.full_avg_latency.map_or_else(String::new, f),
            opt(&r.optimal),
            text(&r.error)
        );
    }
    s
}

pub fn threshold_sweep_csv(rows: &[ThresholdSweepRow]) -> String {
    let mut s = String::from("theta,bus_count,conflict_pair_count,error\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.theta,
            opt(&r.bus_count),
            opt(&r.conflict_pair_count),
            text(&r.error)
        );
    }
    s
}

pub fn bindings_csv(c: &BindingComparison) -> String {
    let mut s = String::from("scheme,avg_latency,ratio\n");
    let _ = writeln!(s, "optimal,{},{}", f(c.optimal_avg_latency), f(1.0));
    for (k, r) in c.random_avg_latency.iter().enumerate() {
        let ratio = if c.optimal_avg_latency > 0.0 { r / c.optimal_avg_latency } else { 1.0 };
        let _ = writeln!(s, "random_{},{},{}", k + 1, f(*r), f(ratio));
    }
    let mean = c.random_avg_latency.iter().sum::<f64>() / c.random_avg_latency.len() as f64;
    let _ = writeln!(s, "random_mean,{},{}", f(mean), f(c.mean_ratio));
    s
}

pub fn histogram_csv(hist: &[(u64, usize)]) -> String {
    let mut s = String::from("latency,count\n");
    for (l, c) in hist {
        let _ = writeln!(s, "{l},{c}");
    }
    s
}

pub fn latencies_csv(trace: &Trace, r: &SimReport) -> String {
    let mut s = String::from("index,start_cycle,initiator,target,latency,queuing\n");
    for (k, t) in trace.transactions.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            k + 1,
            t.start_cycle,
            t.initiator + 1,
            t.target + 1,
            r.latencies[k],
            r.queuing[k]
        );
    }
    s
}

/// Simulation summary without the per-transaction vectors.
pub fn sim_summary(r: &SimReport, binding: &str) -> Value {
    json!({
        "binding": binding,
        "transactions": r.latencies.len(),
        "avg_latency": r.avg_latency,
        "max_latency": r.max_latency,
        "avg_queuing": r.avg_queuing,
        "per_target_avg_latency": r.per_target_avg,
        "per_bus_busy": r.per_bus_busy,
        "per_bus_utilization": r.per_bus_utilization,
        "makespan": r.makespan,
        "dropped": r.dropped,
    })
}

pub fn sizing_json(m: &MinConfig) -> Value {
    json!({
        "best_buses": m.best_buses,
        "proven_lower_bound": m.lower_bound,
        "optimal": m.is_optimal(),
    })
}

/// Writes artifacts into one directory and remembers their names.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Records the command, its parameters, the artifacts written so far and
    /// the final status.
    pub fn finish(mut self, command: &str, parameters: Value, status: &str) -> Result<()> {
        let mut artifacts = self.written.clone();
        artifacts.push("manifest.json".into());
        let manifest = json!({
            "tool": "xbar",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "parameters": parameters,
            "artifacts": artifacts,
            "status": status,
        });
        self.write_json("manifest.json", &manifest)
    }
}
