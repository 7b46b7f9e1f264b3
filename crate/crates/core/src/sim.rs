//! Cycle-level replay of a trace on a crossbar.
//!
//! Each transaction requests the bus of its target at its start cycle. A bus
//! serves one transaction at a time, non-preemptively, for its full duration
//! (plus an optional per-grant overhead). Waiting requests are granted first
//! come first served, ties broken by `(target, initiator)`. Buses never
//! interact, so each bus is a single FIFO server and the grant time of a
//! request is `max(arrival, previous completion on that bus)`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::CrossbarConfig;
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Extra cycles a bus spends on every grant.
    pub grant_overhead: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    /// Completion minus start cycle, in trace order.
    pub latencies: Vec<u64>,
    /// Cycles spent waiting for the bus, in trace order.
    pub queuing: Vec<u64>,
    pub avg_latency: f64,
    pub max_latency: u64,
    pub avg_queuing: f64,
    /// Mean latency per target; 0 for silent targets.
    pub per_target_avg: Vec<f64>,
    pub per_bus_busy: Vec<u64>,
    pub per_bus_utilization: Vec<f64>,
    /// Last completion cycle.
    pub makespan: u64,
    pub dropped: usize,
}

pub fn simulate(trace: &Trace, config: &CrossbarConfig) -> Result<SimReport> {
    simulate_with(trace, config, &SimOptions::default())
}

pub fn simulate_with(
    trace: &Trace,
    config: &CrossbarConfig,
    options: &SimOptions,
) -> Result<SimReport> {
    if let Some(t) = trace
        .transactions
        .iter()
        .find(|t| t.target >= config.binding.len())
    {
        return Err(Error::MissingTarget(t.target));
    }
    let buses = config.num_buses;
    let mut free_at = vec![0u64; buses];
    let mut per_bus_busy = vec![0u64; buses];
    let mut latencies = Vec::with_capacity(trace.transactions.len());
    let mut queuing = Vec::with_capacity(trace.transactions.len());
    let mut target_sum = vec![0u64; trace.num_targets];
    let mut target_count = vec![0u64; trace.num_targets];

    // Transactions are stored in arbitration order already.
    for t in &trace.transactions {
        let bus = config.binding[t.target];
        let grant = t.start_cycle.max(free_at[bus]);
        let service = options.grant_overhead + t.duration;
        let done = grant + service;
        free_at[bus] = done;
        per_bus_busy[bus] += service;
        latencies.push(done - t.start_cycle);
        queuing.push(grant - t.start_cycle);
        target_sum[t.target] += done - t.start_cycle;
        target_count[t.target] += 1;
    }

    let count = latencies.len();
    let mean = |v: &[u64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<u64>() as f64 / v.len() as f64
        }
    };
    let makespan = free_at.iter().copied().max().unwrap_or(0);
    let span = makespan.max(trace.horizon).max(1) as f64;
    Ok(SimReport {
        avg_latency: mean(&latencies),
        max_latency: latencies.iter().copied().max().unwrap_or(0),
        avg_queuing: mean(&queuing),
        per_target_avg: target_sum
            .iter()
            .zip(&target_count)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s as f64 / c as f64 })
            .collect(),
        per_bus_utilization: per_bus_busy.iter().map(|&b| b as f64 / span).collect(),
        per_bus_busy,
        makespan,
        dropped: trace.transactions.len() - count,
        latencies,
        queuing,
    })
}

/// `(latency, count)` pairs in increasing latency order.
pub fn latency_histogram(report: &SimReport) -> Vec<(u64, usize)> {
    let mut hist = BTreeMap::new();
    for &l in &report.latencies {
        *hist.entry(l).or_insert(0) += 1;
    }
    hist.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub avg_latency: f64,
    pub max_latency: u64,
    pub bus_count: usize,
    /// Bus count relative to the one-bus shared baseline. Arbiters and
    /// adapters are not counted.
    pub size_ratio: f64,
}

/// Simulates every named configuration on the same trace.
pub fn compare(trace: &Trace, configs: &[(String, CrossbarConfig)]) -> Result<Vec<ComparisonRow>> {
    configs
        .iter()
        .map(|(name, config)| {
            let r = simulate(trace, config)?;
            Ok(ComparisonRow {
                name: name.clone(),
                avg_latency: r.avg_latency,
                max_latency: r.max_latency,
                bus_count: config.num_buses,
                size_ratio: config.num_buses as f64,
            })
        })
        .collect()
}
