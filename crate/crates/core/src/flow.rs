//! The end-to-end design flow and the experiment sweeps built on it.
//!
//! `design` runs window profiling, overlap aggregation, conflict
//! pre-processing, sizing, binding and a latency comparison of the designed
//! crossbar against the shared-bus and full-crossbar baselines.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{self, GenSpec};
use crate::sim::{compare, simulate, ComparisonRow};
use crate::solver::{
    self, validate_binding, CrossbarConfig, MinConfig, ProblemInstance, SolveReport, SolverLimits,
};
use crate::trace::{load_trace, Direction, Trace};
use crate::window::{
    aggregate_overlap, preprocess, profile, AnalysisParams, ConflictMatrix, OverlapMatrix,
    WindowProfile,
};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Generated(GenSpec),
}

/// Everything one design run needs besides output locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: TraceSource,
    pub params: AnalysisParams,
    pub direction: Direction,
    pub limits: SolverLimits,
    /// Skip sizing and bind onto this many buses.
    pub buses: Option<usize>,
    /// Seed for randomized experiments (random bindings).
    pub seed: u64,
}

impl RunConfig {
    pub fn new(source: TraceSource, params: AnalysisParams) -> Self {
        RunConfig {
            source,
            params,
            direction: Direction::Request,
            limits: SolverLimits::unlimited(),
            buses: None,
            seed: 0,
        }
    }

    /// Loads or generates the trace. Generated traces only carry requests, so
    /// designing the response crossbar from a spec mirrors every transaction.
    pub fn trace(&self) -> Result<Trace> {
        match &self.source {
            TraceSource::File(path) => load_trace(path, self.direction),
            TraceSource::Generated(spec) => {
                let trace = generator::generate(spec)?;
                match self.direction {
                    Direction::Request => Ok(trace),
                    Direction::Response => mirror(&trace),
                }
            }
        }
    }
}

/// Swaps initiator and target roles of every transaction.
fn mirror(trace: &Trace) -> Result<Trace> {
    let txns = trace
        .transactions
        .iter()
        .map(|t| crate::trace::Transaction {
            initiator: t.target,
            target: t.initiator,
            direction: Direction::Response,
            ..*t
        })
        .collect();
    Trace::new(trace.num_targets, trace.num_initiators, Direction::Response, txns)?
        .with_horizon(trace.horizon)
}

/// Analysis products feeding the solver.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub profile: WindowProfile,
    pub overlap: OverlapMatrix,
    pub conflict: ConflictMatrix,
    pub instance: ProblemInstance,
}

pub fn analyze(trace: &Trace, params: &AnalysisParams) -> Result<Analysis> {
    params.validate()?;
    if trace.num_targets > solver::MAX_TARGETS {
        return Err(Error::TooManyTargets(trace.num_targets));
    }
    let profile = profile(trace, params.window_size)?;
    let overlap = aggregate_overlap(&profile);
    let conflict = preprocess(&profile, params)?;
    let mut instance = ProblemInstance::from_analysis(
        &profile,
        overlap.clone(),
        conflict.clone(),
        params.maxtb(trace.num_targets),
    );
    if profile.num_windows() == 0 {
        // An empty trace still needs one (idle) window for the instance.
        let n = trace.num_targets;
        instance = ProblemInstance::new(
            params.window_size,
            vec![vec![0]; n],
            overlap.clone(),
            conflict.clone(),
            params.maxtb(n),
        );
    }
    Ok(Analysis {
        profile,
        overlap,
        conflict,
        instance: instance?,
    })
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub analysis: Analysis,
    /// `None` when the bus count was given explicitly.
    pub sizing: Option<MinConfig>,
    pub report: SolveReport,
    /// Rows `shared`, `designed`, `full`.
    pub comparison: Vec<ComparisonRow>,
}

impl DesignOutcome {
    pub fn row(&self, name: &str) -> &ComparisonRow {
        self.comparison
            .iter()
            .find(|r| r.name == name)
            .expect("comparison rows are fixed")
    }

    pub fn bus_count(&self) -> usize {
        self.report.config.num_buses
    }
}

/// Runs the whole flow on an already loaded trace.
pub fn design_trace(
    trace: &Trace,
    params: &AnalysisParams,
    limits: &SolverLimits,
    buses: Option<usize>,
) -> Result<DesignOutcome> {
    let analysis = analyze(trace, params)?;
    design_analyzed(trace, analysis, limits, buses)
}

/// Sizing, binding, validation and comparison for an analysis of `trace`.
pub fn design_analyzed(
    trace: &Trace,
    analysis: Analysis,
    limits: &SolverLimits,
    buses: Option<usize>,
) -> Result<DesignOutcome> {
    let inst = &analysis.instance;
    let (sizing, report) = match buses {
        Some(b) => (None, solver::optimal_binding_with(inst, b, limits)?),
        None => {
            let (sizing, report) = solver::solve(inst, limits)?;
            (Some(sizing), report)
        }
    };
    if let Err(v) = validate_binding(inst, &report.config) {
        return Err(Error::InvalidParam(format!(
            "solver produced an invalid binding: {v:?}"
        )));
    }
    let n = trace.num_targets;
    let comparison = compare(
        trace,
        &[
            ("shared".to_string(), CrossbarConfig::shared_bus(n)),
            ("designed".to_string(), report.config.clone()),
            ("full".to_string(), CrossbarConfig::full_crossbar(n)),
        ],
    )?;
    Ok(DesignOutcome {
        analysis,
        sizing,
        report,
        comparison,
    })
}

pub fn design(run: &RunConfig) -> Result<DesignOutcome> {
    let trace = run.trace()?;
    design_trace(&trace, &run.params, &run.limits, run.buses)
}

/// The average-traffic baseline: one window spanning the whole horizon and
/// the loosest overlap threshold.
pub fn average_bandwidth_design(trace: &Trace, limits: &SolverLimits) -> Result<DesignOutcome> {
    let params = AnalysisParams::new(trace.horizon.max(1), crate::window::MAX_OVERLAP_THRESHOLD);
    design_trace(trace, &params, limits, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSweepRow {
    pub window_size: u64,
    pub bus_count: Option<usize>,
    pub avg_latency: Option<f64>,
    pub max_latency: Option<u64>,
    pub full_avg_latency: Option<f64>,
    pub optimal: Option<bool>,
    pub error: Option<String>,
}

/// One design per window size; failures are recorded in their row.
pub fn sweep_window(
    trace: &Trace,
    params: &AnalysisParams,
    limits: &SolverLimits,
    window_sizes: &[u64],
) -> Result<Vec<WindowSweepRow>> {
    if window_sizes.is_empty() {
        return Err(Error::InvalidParam("window size list is empty".into()));
    }
    Ok(window_sizes
        .par_iter()
        .map(|&ws| {
            let p = AnalysisParams {
                window_size: ws,
                ..*params
            };
            match design_trace(trace, &p, limits, None) {
                Ok(d) => WindowSweepRow {
                    window_size: ws,
                    bus_count: Some(d.bus_count()),
                    avg_latency: Some(d.row("designed").avg_latency),
                    max_latency: Some(d.row("designed").max_latency),
                    full_avg_latency: Some(d.row("full").avg_latency),
                    optimal: Some(d.report.optimal),
                    error: None,
                },
                Err(e) => WindowSweepRow {
                    window_size: ws,
                    bus_count: None,
                    avg_latency: None,
                    max_latency: None,
                    full_avg_latency: None,
                    optimal: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSweepRow {
    pub theta: f64,
    pub bus_count: Option<usize>,
    pub conflict_pair_count: Option<usize>,
    pub error: Option<String>,
}

/// One design per overlap threshold.
pub fn sweep_threshold(
    trace: &Trace,
    params: &AnalysisParams,
    limits: &SolverLimits,
    thetas: &[f64],
) -> Result<Vec<ThresholdSweepRow>> {
    if thetas.is_empty() {
        return Err(Error::InvalidParam("threshold list is empty".into()));
    }
    for &t in thetas {
        crate::window::validate_threshold(t)?;
    }
    Ok(thetas
        .par_iter()
        .map(|&theta| {
            let p = AnalysisParams {
                overlap_threshold: theta,
                ..*params
            };
            match design_trace(trace, &p, limits, None) {
                Ok(d) => ThresholdSweepRow {
                    theta,
                    bus_count: Some(d.bus_count()),
                    conflict_pair_count: Some(d.analysis.conflict.pair_count()),
                    error: None,
                },
                Err(e) => ThresholdSweepRow {
                    theta,
                    bus_count: None,
                    conflict_pair_count: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Upper bound on rejected draws per random binding.
pub const MAX_REJECTIONS: u64 = 2_000_000;

/// Draws a binding uniformly from all bus labellings satisfying every
/// constraint, by rejection.
pub fn sample_feasible_binding(
    inst: &ProblemInstance,
    buses: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<CrossbarConfig> {
    let n = inst.num_targets();
    let mut binding = vec![0; n];
    for _ in 0..MAX_REJECTIONS {
        for b in binding.iter_mut() {
            *b = generator::below(rng, buses);
        }
        let config = CrossbarConfig {
            num_buses: buses,
            binding: binding.clone(),
        };
        if validate_binding(inst, &config).is_ok() {
            return Ok(config);
        }
    }
    Err(Error::SamplingFailed(MAX_REJECTIONS))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BindingComparison {
    pub buses: usize,
    pub optimal_avg_latency: f64,
    pub random_avg_latency: Vec<f64>,
    /// Mean over random bindings of `random avg / optimal avg`.
    pub mean_ratio: f64,
}

/// Optimal binding against `num_random` random feasible bindings on the
/// minimum bus count.
pub fn compare_bindings(
    trace: &Trace,
    params: &AnalysisParams,
    limits: &SolverLimits,
    num_random: usize,
    seed: u64,
) -> Result<BindingComparison> {
    if num_random == 0 {
        return Err(Error::InvalidParam("need at least one random binding".into()));
    }
    let outcome = design_trace(trace, params, limits, None)?;
    let buses = outcome.bus_count();
    let optimal = simulate(trace, &outcome.report.config)?.avg_latency;
    let mut rng = generator::stream(seed, u64::MAX);
    let mut random_avg_latency = Vec::with_capacity(num_random);
    for _ in 0..num_random {
        let config = sample_feasible_binding(&outcome.analysis.instance, buses, &mut rng)?;
        random_avg_latency.push(simulate(trace, &config)?.avg_latency);
    }
    let ratio = |r: f64| if optimal > 0.0 { r / optimal } else { 1.0 };
    let mean_ratio =
        random_avg_latency.iter().map(|&r| ratio(r)).sum::<f64>() / num_random as f64;
    Ok(BindingComparison {
        buses,
        optimal_avg_latency: optimal,
        random_avg_latency,
        mean_ratio,
    })
}
