//! Exact crossbar sizing and target-to-bus binding.
//!
//! A binding assigns every target to exactly one bus. It is valid when, on
//! every bus and in every window, the summed busy cycles fit in the window;
//! no two conflicting targets share a bus; and no bus carries more than
//! `maxtb` targets. Sizing looks for the fewest buses admitting a valid
//! binding (binary search over feasibility probes); binding then minimizes
//! `maxov`, the largest per-bus sum of pairwise overlaps `om[i][j]` over
//! unordered pairs `i < j` sharing that bus.

mod milp;
mod search;

use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::window::{ConflictMatrix, OverlapMatrix, WindowProfile};

pub use milp::{export_milp, LinearRow, MilpModel, RowSense};
pub use search::{check_feasible, check_feasible_with, min_config, min_config_with, optimal_binding, optimal_binding_with, solve};

/// Largest crossbar the solver accepts.
pub const MAX_TARGETS: usize = 32;

/// All constraint data for one crossbar design problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    window_size: u64,
    /// `[target][window]`.
    comm: Vec<Vec<u64>>,
    om: OverlapMatrix,
    conflict: ConflictMatrix,
    maxtb: usize,
}

impl ProblemInstance {
    pub fn new(
        window_size: u64,
        comm: Vec<Vec<u64>>,
        om: OverlapMatrix,
        conflict: ConflictMatrix,
        maxtb: usize,
    ) -> Result<Self> {
        let n = comm.len();
        if n == 0 {
            return Err(Error::Dimension("instance has no targets".into()));
        }
        if n > MAX_TARGETS {
            return Err(Error::TooManyTargets(n));
        }
        if window_size == 0 {
            return Err(Error::Dimension("window size must be positive".into()));
        }
        let w = comm[0].len();
        if comm.iter().any(|r| r.len() != w) {
            return Err(Error::Dimension("comm rows differ in window count".into()));
        }
        if om.len() != n || conflict.len() != n {
            return Err(Error::Dimension(format!(
                "{n} targets but overlap matrix is {} and conflict matrix is {}",
                om.len(),
                conflict.len()
            )));
        }
        if (0..n).any(|i| conflict.get(i, i)) {
            return Err(Error::Dimension("conflict matrix diagonal must be zero".into()));
        }
        if maxtb == 0 {
            return Err(Error::Dimension("maxtb must be at least 1".into()));
        }
        Ok(ProblemInstance {
            window_size,
            comm,
            om,
            conflict,
            maxtb,
        })
    }

    /// Assembles an instance from the analysis products.
    pub fn from_analysis(
        profile: &WindowProfile,
        om: OverlapMatrix,
        conflict: ConflictMatrix,
        maxtb: usize,
    ) -> Result<Self> {
        let comm = (0..profile.num_targets())
            .map(|i| profile.comm_row(i).to_vec())
            .collect();
        ProblemInstance::new(profile.window_size(), comm, om, conflict, maxtb)
    }

    pub fn num_targets(&self) -> usize {
        self.comm.len()
    }

    pub fn num_windows(&self) -> usize {
        self.comm[0].len()
    }

    pub fn window_size(&self) -> u64 {
        self.window_size
    }

    pub fn comm(&self, target: usize, window: usize) -> u64 {
        self.comm[target][window]
    }

    pub fn om(&self) -> &OverlapMatrix {
        &self.om
    }

    pub fn conflict(&self) -> &ConflictMatrix {
        &self.conflict
    }

    pub fn maxtb(&self) -> usize {
        self.maxtb
    }

    /// Total busy cycles of a target over all windows.
    pub fn total_busy(&self, target: usize) -> u64 {
        self.comm[target].iter().sum()
    }

    /// Lower bound on the bus count from bandwidth, a greedy conflict clique
    /// and the per-bus target cap.
    pub fn bus_lower_bound(&self) -> usize {
        let n = self.num_targets();
        let ws = self.window_size;
        let bandwidth = (0..self.num_windows())
            .map(|m| {
                let total: u64 = (0..n).map(|i| self.comm[i][m]).sum();
                total.div_ceil(ws) as usize
            })
            .max()
            .unwrap_or(0);
        let cardinality = n.div_ceil(self.maxtb);
        bandwidth
            .max(greedy_clique(&self.conflict))
            .max(cardinality)
            .clamp(1, n)
    }
}

/// Size of the largest clique found by growing one greedily from every vertex.
pub fn greedy_clique(conflict: &ConflictMatrix) -> usize {
    let n = conflict.len();
    let degree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| conflict.get(i, j)).count())
        .collect();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| std::cmp::Reverse(degree[i]));
    let mut best = usize::from(n > 0);
    for &seed in &by_degree {
        let mut clique = vec![seed];
        for &v in &by_degree {
            if v != seed && clique.iter().all(|&u| conflict.get(u, v)) {
                clique.push(v);
            }
        }
        best = best.max(clique.len());
    }
    best
}

/// A crossbar: bus count plus the bus of every target (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CrossbarConfig {
    pub num_buses: usize,
    pub binding: Vec<usize>,
}

impl CrossbarConfig {
    pub fn new(num_buses: usize, binding: Vec<usize>) -> Result<Self> {
        if num_buses == 0 {
            return Err(Error::InvalidParam("a crossbar needs at least one bus".into()));
        }
        if let Some(&b) = binding.iter().find(|&&b| b >= num_buses) {
            return Err(Error::InvalidParam(format!(
                "bus {} out of range 1..={num_buses}",
                b + 1
            )));
        }
        Ok(CrossbarConfig { num_buses, binding })
    }

    /// Every target on one bus.
    pub fn shared_bus(num_targets: usize) -> Self {
        CrossbarConfig {
            num_buses: 1,
            binding: vec![0; num_targets],
        }
    }

    /// One bus per target.
    pub fn full_crossbar(num_targets: usize) -> Self {
        CrossbarConfig {
            num_buses: num_targets.max(1),
            binding: (0..num_targets).collect(),
        }
    }

    pub fn num_targets(&self) -> usize {
        self.binding.len()
    }

    /// Relabels buses by first appearance in target order, so that target 0
    /// sits on bus 0 and each new bus gets the next free label.
    pub fn canonical(&self) -> Self {
        let mut relabel = vec![usize::MAX; self.num_buses];
        let mut next = 0;
        let binding = self
            .binding
            .iter()
            .map(|&b| {
                if relabel[b] == usize::MAX {
                    relabel[b] = next;
                    next += 1;
                }
                relabel[b]
            })
            .collect();
        CrossbarConfig {
            num_buses: self.num_buses,
            binding,
        }
    }

    /// Targets grouped by bus.
    pub fn bus_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_buses];
        for (t, &b) in self.binding.iter().enumerate() {
            members[b].push(t);
        }
        members
    }

    /// 1-based bus labels, comma separated.
    pub fn binding_string(&self) -> String {
        self.binding
            .iter()
            .map(|b| (b + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses a 1-based comma separated binding.
    pub fn parse_binding(text: &str, num_buses: Option<usize>) -> Result<Self> {
        let binding: Vec<usize> = text
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .ok()
                    .and_then(|b| b.checked_sub(1))
                    .ok_or_else(|| Error::InvalidParam(format!("invalid bus label '{tok}'")))
            })
            .collect::<Result<_>>()?;
        let used = binding.iter().max().map_or(1, |b| b + 1);
        CrossbarConfig::new(num_buses.unwrap_or(used), binding)
    }
}

/// Why a binding is invalid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Binding length differs from the target count, or a bus label is out of range.
    Shape,
    Bandwidth { bus: usize, window: usize, load: u64 },
    Conflict { a: usize, b: usize },
    Cardinality { bus: usize, count: usize },
}

/// Re-checks a binding against every constraint, independently of the search.
pub fn validate_binding(
    inst: &ProblemInstance,
    config: &CrossbarConfig,
) -> std::result::Result<(), Violation> {
    let n = inst.num_targets();
    if config.binding.len() != n || config.binding.iter().any(|&b| b >= config.num_buses) {
        return Err(Violation::Shape);
    }
    for (bus, members) in config.bus_members().iter().enumerate() {
        if members.len() > inst.maxtb {
            return Err(Violation::Cardinality {
                bus,
                count: members.len(),
            });
        }
        for m in 0..inst.num_windows() {
            let load: u64 = members.iter().map(|&t| inst.comm[t][m]).sum();
            if load > inst.window_size {
                return Err(Violation::Bandwidth { bus, window: m, load });
            }
        }
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                if inst.conflict.get(a, b) {
                    return Err(Violation::Conflict { a, b });
                }
            }
        }
    }
    Ok(())
}

/// Per-bus sum of `om[i][j]` over unordered pairs sharing the bus.
pub fn bus_overlaps(om: &OverlapMatrix, config: &CrossbarConfig) -> Vec<u64> {
    config
        .bus_members()
        .iter()
        .map(|members| {
            let mut sum = 0;
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    sum += om.get(a, b);
                }
            }
            sum
        })
        .collect()
}

/// The binding objective: the largest per-bus pairwise overlap.
pub fn maxov(om: &OverlapMatrix, config: &CrossbarConfig) -> u64 {
    bus_overlaps(om, config).into_iter().max().unwrap_or(0)
}

/// Node and wall-clock budget for one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverLimits {
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl SolverLimits {
    pub fn unlimited() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub nodes: u64,
    pub elapsed_ms: u128,
    /// False when the search stopped on a limit.
    pub complete: bool,
}

impl SearchStats {
    pub(crate) fn absorb(&mut self, other: SearchStats) {
        self.nodes += other.nodes;
        self.elapsed_ms += other.elapsed_ms;
        self.complete &= other.complete;
    }
}

/// Outcome of one feasibility probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility {
    Feasible(CrossbarConfig),
    Infeasible,
    /// The limit ran out before a witness or a proof was found.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Probe {
    pub buses: usize,
    /// `None` when the probe hit a limit.
    pub feasible: Option<bool>,
}

/// Result of the sizing phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinConfig {
    /// Smallest bus count with a known witness.
    pub best_buses: usize,
    /// Largest bus count proven necessary.
    pub lower_bound: usize,
    pub witness: CrossbarConfig,
    pub probes: Vec<Probe>,
    pub stats: SearchStats,
}

impl MinConfig {
    /// True when `best_buses` is proven minimal.
    pub fn is_optimal(&self) -> bool {
        self.lower_bound == self.best_buses
    }
}

/// Result of the binding phase, or of sizing followed by binding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveReport {
    pub config: CrossbarConfig,
    /// Achieved objective over unordered pairs `i < j`.
    pub maxov: u64,
    /// False when a limit stopped the search and `config` is only the incumbent.
    pub optimal: bool,
    pub feasibility_probes: Vec<Probe>,
    pub stats: SearchStats,
}

impl SolveReport {
    /// Structured report with 1-based target and bus labels.
    pub fn to_json(&self, om: &OverlapMatrix) -> serde_json::Value {
        let members: Vec<Vec<usize>> = self
            .config
            .bus_members()
            .into_iter()
            .map(|m| m.into_iter().map(|t| t + 1).collect())
            .collect();
        serde_json::json!({
            "num_buses": self.config.num_buses,
            "binding": self.config.binding.iter().map(|b| b + 1).collect::<Vec<_>>(),
            "bus_members": members,
            "maxov": self.maxov,
            "maxov_convention": "sum over unordered pairs i<j sharing a bus",
            "bus_overlaps": bus_overlaps(om, &self.config),
            "optimal": self.optimal,
            "feasibility_probes": self.feasibility_probes,
            "search_stats": self.stats,
        })
    }
}
