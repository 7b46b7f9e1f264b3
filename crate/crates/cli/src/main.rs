//! `xbar`: trace-driven partial crossbar design from the command line.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use xbar::flow::{
    analyze, compare_bindings, design_analyzed, sweep_threshold, sweep_window, RunConfig,
    TraceSource,
};
use xbar::generator::{benchmark_preset, GenSpec, Preset};
use xbar::sim::{latency_histogram, simulate_with, SimOptions};
use xbar::solver::{export_milp, min_config_with, CrossbarConfig, SolverLimits};
use xbar::trace::{trace_stats, Direction, Trace};
use xbar::window::AnalysisParams;

use output::OutDir;

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "xbar", version, about = "Design application-specific partial crossbars from traffic traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic trace from a preset or generator config
    Gen {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write per-window busy cycles, the overlap matrix and conflicts
    Analyze {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Size and bind a crossbar and compare it against shared bus and full crossbar
    Design {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Bind onto this many buses instead of the minimum
        #[arg(long, value_name = "N")]
        buses: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Replay a trace on a given binding
    Simulate {
        #[command(flatten)]
        source: SourceArgs,
        /// Bus of each target, 1-based and comma separated (e.g. 1,2,1)
        #[arg(long, value_name = "BUSES")]
        binding: String,
        /// Total bus count when some buses stay empty
        #[arg(long, value_name = "N")]
        buses: Option<usize>,
        /// Extra cycles per bus grant
        #[arg(long, default_value_t = 0, value_name = "CYCLES")]
        grant_overhead: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Design once per window size
    SweepWindow {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Window sizes in cycles [default: 0.25x to 8x the window size]
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        ws_list: Vec<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Design once per overlap threshold
    SweepThreshold {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_delimiter = ',', value_name = "LIST", default_value = "0.1,0.2,0.3,0.4,0.5")]
        theta_list: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare the optimal binding with random feasible bindings
    CompareBindings {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 10, value_name = "N")]
        num_random: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write the binding model in LP format
    ExportLp {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Bus count of the model [default: the minimum]
        #[arg(long, value_name = "N")]
        buses: Option<usize>,
        /// Omit the overlap objective
        #[arg(long)]
        feasibility: bool,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Debug)]
struct SourceArgs {
    /// Trace CSV file
    #[arg(long, value_name = "FILE", conflicts_with_all = ["preset", "config"])]
    trace: Option<PathBuf>,
    /// Built-in traffic preset: mat2like, uniform or hotspot
    #[arg(long, value_name = "NAME")]
    preset: Option<Preset>,
    /// Generator config of key=value lines, applied over --preset
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Crossbar to design: req (initiators to targets) or resp
    #[arg(long, default_value = "req", value_name = "DIR")]
    direction: Direction,
    /// Run seed; replaces the generator seed and drives random bindings
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct AnalysisArgs {
    /// Window size in cycles [default: generator burst length]
    #[arg(long, value_name = "CYCLES")]
    window_size: Option<u64>,
    /// Overlap fraction of a window above which two targets conflict
    #[arg(long, default_value_t = 0.3, value_name = "FRACTION")]
    overlap_threshold: f64,
    /// Cap on targets per bus [default: no cap]
    #[arg(long, value_name = "N")]
    max_targets_per_bus: Option<usize>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Wall-clock budget per solve in seconds
    #[arg(long, value_name = "SECONDS")]
    time_limit: Option<f64>,
    /// Search-node budget per solve
    #[arg(long, value_name = "N")]
    node_limit: Option<u64>,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Directory for all artifacts
    #[arg(long, default_value = "xbar-out", value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(message.into()))
}

impl SourceArgs {
    fn gen_spec(&self) -> Result<Option<GenSpec>> {
        if self.trace.is_some() {
            return Ok(None);
        }
        let base = match self.preset {
            Some(p) => benchmark_preset(p),
            None => GenSpec::new(1, 1, 1000, 1000, 100_000, 0),
        };
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                GenSpec::parse_config(&text, base)?
            }
            None if self.preset.is_some() => base,
            None => return Err(usage("one of --trace, --preset or --config is required")),
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        spec.validate()?;
        Ok(Some(spec))
    }

    fn source(&self) -> Result<TraceSource> {
        Ok(match (&self.trace, self.gen_spec()?) {
            (Some(path), _) => TraceSource::File(path.clone()),
            (None, Some(spec)) => TraceSource::Generated(spec),
            (None, None) => unreachable!("gen_spec covers the missing-source case"),
        })
    }

    fn describe(&self, source: &TraceSource) -> Value {
        let origin = match source {
            TraceSource::File(path) => json!({ "trace": path.display().to_string() }),
            TraceSource::Generated(spec) => json!({ "generator": spec.to_config_string() }),
        };
        json!({
            "source": origin,
            "direction": self.direction.as_str(),
            "seed": self.seed.unwrap_or(0),
        })
    }
}

impl SolverArgs {
    fn limits(&self) -> Result<SolverLimits> {
        let time_limit = match self.time_limit {
            Some(s) if !(s.is_finite() && s > 0.0) => {
                return Err(usage("--time-limit must be a positive number of seconds"))
            }
            Some(s) => Some(Duration::from_secs_f64(s)),
            None => None,
        };
        Ok(SolverLimits {
            node_limit: self.node_limit,
            time_limit,
        })
    }
}

/// Resolved inputs of one command.
struct Prepared {
    run: RunConfig,
    trace: Trace,
    parameters: Value,
}

fn prepare(
    source: &SourceArgs,
    analysis: &AnalysisArgs,
    solver: Option<&SolverArgs>,
    buses: Option<usize>,
) -> Result<Prepared> {
    let src = source.source()?;
    let window_size = match (analysis.window_size, &src) {
        (Some(ws), _) => ws,
        (None, TraceSource::Generated(spec)) => spec.burst_len_mean,
        (None, TraceSource::File(_)) => {
            return Err(usage("--window-size is required with --trace"))
        }
    };
    let params = AnalysisParams {
        window_size,
        overlap_threshold: analysis.overlap_threshold,
        max_targets_per_bus: analysis.max_targets_per_bus,
    };
    params.validate()?;
    let mut run = RunConfig::new(src, params);
    run.direction = source.direction;
    run.seed = source.seed.unwrap_or(0);
    run.buses = buses;
    if let Some(s) = solver {
        run.limits = s.limits()?;
    }
    let trace = run.trace()?;
    let mut parameters = source.describe(&run.source);
    parameters["window_size"] = json!(window_size);
    parameters["overlap_threshold"] = json!(analysis.overlap_threshold);
    parameters["max_targets_per_bus"] = json!(params.maxtb(trace.num_targets));
    if let Some(s) = solver {
        parameters["time_limit_s"] = json!(s.time_limit);
        parameters["node_limit"] = json!(s.node_limit);
    }
    if let Some(b) = buses {
        parameters["buses"] = json!(b);
    }
    Ok(Prepared {
        run,
        trace,
        parameters,
    })
}

fn status_of(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<xbar::Error>() {
        Some(xbar::Error::BandwidthInfeasible { .. })
        | Some(xbar::Error::Infeasible(_))
        | Some(xbar::Error::SamplingFailed(_)) => "infeasible",
        Some(xbar::Error::LimitReached) => "limit",
        _ => "error",
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match status_of(err) {
        "infeasible" => EXIT_INFEASIBLE,
        "limit" => EXIT_LIMIT,
        _ => EXIT_USAGE,
    }
}

/// Final status of a command that produced all its artifacts.
enum Done {
    Ok,
    /// A solve stopped at its budget; results are the best found.
    Limit,
}

fn cmd_gen(source: &SourceArgs, out: &OutArgs) -> Result<Done> {
    if source.trace.is_some() {
        return Err(usage("gen takes --preset or --config, not --trace"));
    }
    let spec = source.gen_spec()?.expect("no trace given");
    let trace = xbar::generator::generate(&spec)?;
    let stats = trace_stats(&trace);
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write("trace.csv", &trace.to_csv())?;
    dir.write("generator.cfg", &spec.to_config_string())?;
    println!(
        "{} transactions, {} initiators, {} targets, horizon {}",
        trace.transactions.len(),
        trace.num_initiators,
        trace.num_targets,
        stats.horizon
    );
    for (t, (busy, count)) in stats.busy_cycles.iter().zip(&stats.transaction_count).enumerate() {
        println!("  target {:>2}: {count} transactions, {busy} busy cycles", t + 1);
    }
    dir.finish("gen", json!({ "generator": spec.to_config_string() }), "ok")?;
    Ok(Done::Ok)
}

fn cmd_analyze(source: &SourceArgs, analysis: &AnalysisArgs, out: &OutArgs) -> Result<Done> {
    let p = prepare(source, analysis, None, None)?;
    let a = analyze(&p.trace, &p.run.params)?;
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write("comm.csv", &output::comm_csv(&a.profile))?;
    dir.write("om.csv", &output::om_csv(&a.overlap))?;
    dir.write("conflict.csv", &output::conflict_csv(&a.conflict))?;
    println!(
        "{} targets, {} windows of {} cycles, {} conflicting pairs, at least {} buses",
        a.instance.num_targets(),
        a.profile.num_windows(),
        a.profile.window_size(),
        a.conflict.pair_count(),
        a.instance.bus_lower_bound()
    );
    dir.finish("analyze", p.parameters, "ok")?;
    Ok(Done::Ok)
}

fn cmd_design(
    source: &SourceArgs,
    analysis: &AnalysisArgs,
    solver: &SolverArgs,
    buses: Option<usize>,
    out: &OutArgs,
) -> Result<Done> {
    let p = prepare(source, analysis, Some(solver), buses)?;
    let a = analyze(&p.trace, &p.run.params)?;
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write("comm.csv", &output::comm_csv(&a.profile))?;
    dir.write("om.csv", &output::om_csv(&a.overlap))?;
    dir.write("conflict.csv", &output::conflict_csv(&a.conflict))?;
    let om = a.overlap.clone();
    let d = match design_analyzed(&p.trace, a, &p.run.limits, buses) {
        Ok(d) => d,
        Err(e) => {
            let e = anyhow::Error::from(e);
            dir.finish("design", p.parameters, status_of(&e))?;
            return Err(e);
        }
    };
    let mut report = d.report.to_json(&om);
    report["binding_string"] = json!(d.report.config.binding_string());
    if let Some(sizing) = &d.sizing {
        report["sizing"] = output::sizing_json(sizing);
    }
    dir.write_json("solve_report.json", &report)?;
    dir.write("comparison.csv", &output::comparison_csv(&d.comparison))?;

    let optimal = d.report.optimal && d.sizing.as_ref().is_none_or(|s| s.is_optimal());
    println!(
        "{} buses for {} targets, maxov {}{}",
        d.bus_count(),
        p.trace.num_targets,
        d.report.maxov,
        if optimal { "" } else { " (search budget exhausted, not proven optimal)" }
    );
    println!("binding {}", d.report.config.binding_string());
    println!("{:<9} {:>5} {:>12} {:>12}", "config", "buses", "avg latency", "max latency");
    for r in &d.comparison {
        println!("{:<9} {:>5} {:>12.2} {:>12}", r.name, r.bus_count, r.avg_latency, r.max_latency);
    }
    let (status, done) = if optimal { ("ok", Done::Ok) } else { ("limit", Done::Limit) };
    dir.finish("design", p.parameters, status)?;
    Ok(done)
}

fn cmd_simulate(
    source: &SourceArgs,
    binding: &str,
    buses: Option<usize>,
    grant_overhead: u64,
    out: &OutArgs,
) -> Result<Done> {
    let src = source.source()?;
    let mut run = RunConfig::new(src, AnalysisParams::new(1, 0.3));
    run.direction = source.direction;
    let trace = run.trace()?;
    let config = CrossbarConfig::parse_binding(binding, buses)?;
    if config.num_targets() != trace.num_targets {
        return Err(usage(format!(
            "binding lists {} targets but the trace has {}",
            config.num_targets(),
            trace.num_targets
        )));
    }
    let report = simulate_with(&trace, &config, &SimOptions { grant_overhead })?;
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write_json("sim_report.json", &output::sim_summary(&report, &config.binding_string()))?;
    dir.write("latency_histogram.csv", &output::histogram_csv(&latency_histogram(&report)))?;
    dir.write("latencies.csv", &output::latencies_csv(&trace, &report))?;
    println!(
        "{} transactions on {} buses: avg latency {:.2}, max {}",
        report.latencies.len(),
        config.num_buses,
        report.avg_latency,
        report.max_latency
    );
    let mut parameters = source.describe(&run.source);
    parameters["binding"] = json!(config.binding_string());
    parameters["buses"] = json!(config.num_buses);
    parameters["grant_overhead"] = json!(grant_overhead);
    dir.finish("simulate", parameters, "ok")?;
    Ok(Done::Ok)
}

fn cmd_sweep_window(
    source: &SourceArgs,
    analysis: &AnalysisArgs,
    solver: &SolverArgs,
    ws_list: &[u64],
    out: &OutArgs,
) -> Result<Done> {
    let mut p = prepare(source, analysis, Some(solver), None)?;
    let sizes: Vec<u64> = if ws_list.is_empty() {
        let base = p.run.params.window_size as f64;
        [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|f| ((f * base) as u64).max(1))
            .collect()
    } else {
        ws_list.to_vec()
    };
    if sizes.contains(&0) {
        return Err(usage("window sizes must be positive"));
    }
    let rows = sweep_window(&p.trace, &p.run.params, &p.run.limits, &sizes)?;
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write("sweep_window.csv", &output::window_sweep_csv(&rows))?;
    println!("{:>8} {:>5} {:>12} {:>12}", "window", "buses", "avg latency", "full avg");
    for r in &rows {
        match (r.bus_count, r.avg_latency, r.full_avg_latency) {
            (Some(b), Some(avg), Some(full)) => {
                println!("{:>8} {b:>5} {avg:>12.2} {full:>12.2}", r.window_size)
            }
            _ => println!("{:>8} failed: {}", r.window_size, r.error.as_deref().unwrap_or("")),
        }
    }
    p.parameters["ws_list"] = json!(sizes);
    let limited = rows.iter().any(|r| r.optimal == Some(false));
    dir.finish("sweep-window", p.parameters, if limited { "limit" } else { "ok" })?;
    Ok(if limited { Done::Limit } else { Done::Ok })
}

fn cmd_sweep_threshold(
    source: &SourceArgs,
    analysis: &AnalysisArgs,
    solver: &SolverArgs,
    thetas: &[f64],
    out: &OutArgs,
) -> Result<Done> {
    let mut p = prepare(source, analysis, Some(solver), None)?;
    let rows = sweep_threshold(&p.trace, &p.run.params, &p.run.limits, thetas)?;
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write("sweep_threshold.csv", &output::threshold_sweep_csv(&rows))?;
    println!("{:>6} {:>5} {:>9}", "theta", "buses", "conflicts");
    for r in &rows {
        match (r.bus_count, r.conflict_pair_count) {
            (Some(b), Some(c)) => println!("{:>6} {b:>5} {c:>9}", r.theta),
            _ => println!("{:>6} failed: {}", r.theta, r.error.as_deref().unwrap_or("")),
        }
    }
    p.parameters["theta_list"] = json!(thetas);
    dir.finish("sweep-threshold", p.parameters, "ok")?;
    Ok(Done::Ok)
}

fn cmd_compare_bindings(
    source: &SourceArgs,
    analysis: &AnalysisArgs,
    solver: &SolverArgs,
    num_random: usize,
    out: &OutArgs,
) -> Result<Done> {
    let mut p = prepare(source, analysis, Some(solver), None)?;
    if num_random == 0 {
        return Err(usage("--num-random must be at least 1"));
    }
    let c = compare_bindings(&p.trace, &p.run.params, &p.run.limits, num_random, p.run.seed)?;
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write("compare_bindings.csv", &output::bindings_csv(&c))?;
    println!(
        "{} buses: optimal avg latency {:.2}, random/optimal mean ratio {:.3} over {} bindings",
        c.buses, c.optimal_avg_latency, c.mean_ratio, num_random
    );
    p.parameters["num_random"] = json!(num_random);
    dir.finish("compare-bindings", p.parameters, "ok")?;
    Ok(Done::Ok)
}

fn cmd_export_lp(
    source: &SourceArgs,
    analysis: &AnalysisArgs,
    solver: &SolverArgs,
    buses: Option<usize>,
    feasibility: bool,
    out: &OutArgs,
) -> Result<Done> {
    let mut p = prepare(source, analysis, Some(solver), buses)?;
    let a = analyze(&p.trace, &p.run.params)?;
    let n = a.instance.num_targets();
    let (b, proven) = match buses {
        Some(b) if b == 0 || b > n => bail!(usage(format!("--buses must lie in 1..={n}"))),
        Some(b) => (b, true),
        None => {
            let m = min_config_with(&a.instance, &p.run.limits)?;
            (m.best_buses, m.is_optimal())
        }
    };
    let model = export_milp(&a.instance, b, !feasibility);
    let mut dir = OutDir::create(&out.out_dir)?;
    dir.write("model.lp", &model.to_lp_string())?;
    println!(
        "{} binaries, {} rows for {} targets on {} buses",
        model.binaries.len(),
        model.rows.len(),
        n,
        b
    );
    p.parameters["buses"] = json!(b);
    p.parameters["objective"] = json!(!feasibility);
    let status = if proven { "ok" } else { "limit" };
    dir.finish("export-lp", p.parameters, status)?;
    Ok(if proven { Done::Ok } else { Done::Limit })
}

fn run(cli: Cli) -> Result<Done> {
    match &cli.command {
        Command::Gen { source, out } => cmd_gen(source, out),
        Command::Analyze { source, analysis, out } => cmd_analyze(source, analysis, out),
        Command::Design { source, analysis, solver, buses, out } => {
            cmd_design(source, analysis, solver, *buses, out)
        }
        Command::Simulate { source, binding, buses, grant_overhead, out } => {
            cmd_simulate(source, binding, *buses, *grant_overhead, out)
        }
        Command::SweepWindow { source, analysis, solver, ws_list, out } => {
            cmd_sweep_window(source, analysis, solver, ws_list, out)
        }
        Command::SweepThreshold { source, analysis, solver, theta_list, out } => {
            cmd_sweep_threshold(source, analysis, solver, theta_list, out)
        }
        Command::CompareBindings { source, analysis, solver, num_random, out } => {
            cmd_compare_bindings(source, analysis, solver, *num_random, out)
        }
        Command::ExportLp { source, analysis, solver, buses, feasibility, out } => {
            cmd_export_lp(source, analysis, solver, *buses, *feasibility, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Limit) => {
            eprintln!("warning: search budget exhausted; results are the best found, not proven optimal");
            ExitCode::from(EXIT_LIMIT)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
