//! Depth-first branch and bound over target-to-bus assignments.
//!
//! Targets are branched in decreasing order of total busy cycles. Each target
//! tries the already opened buses in index order and then at most one fresh
//! bus, which removes the bus-relabelling symmetry. A node is pruned as soon as
//! a bus would exceed the window size in some window, host a conflicting pair,
//! exceed `maxtb`, or (when optimizing) push its overlap past the incumbent.
//! Once every bus is open, each unassigned target must still fit somewhere.

use std::collections::HashSet;
use std::time::Instant;

use super::{
    bus_overlaps, CrossbarConfig, Feasibility, MinConfig, Probe, ProblemInstance, SearchStats,
    SolveReport, SolverLimits,
};
use crate::error::{Error, Result};

/// Instance data reduced to what the search touches.
struct Compiled {
    n: usize,
    ws: u64,
    /// Windows whose total demand exceeds one bus, deduplicated.
    windows: usize,
    /// `[target * windows + w]`.
    comm: Vec<u64>,
    conflict: Vec<u32>,
    /// `[i * n + j]`, zero diagonal.
    om: Vec<u64>,
    maxtb: usize,
    busy: Vec<u64>,
}

impl Compiled {
    fn new(inst: &ProblemInstance) -> Self {
        let n = inst.num_targets();
        let ws = inst.window_size();
        let mut seen = HashSet::new();
        let mut columns = Vec::new();
        for m in 0..inst.num_windows() {
            let col: Vec<u64> = (0..n).map(|i| inst.comm(i, m)).collect();
            if col.iter().sum::<u64>() > ws && seen.insert(col.clone()) {
                columns.push(col);
            }
        }
        let windows = columns.len();
        let mut comm = vec![0; n * windows];
        for (w, col) in columns.iter().enumerate() {
            for i in 0..n {
                comm[i * windows + w] = col[i];
            }
        }
        let om_src = inst.om();
        let om = (0..n * n)
            .map(|x| {
                let (i, j) = (x / n, x % n);
                if i == j {
                    0
                } else {
                    om_src.get(i, j)
                }
            })
            .collect();
        Compiled {
            n,
            ws,
            windows,
            comm,
            conflict: (0..n).map(|i| inst.conflict().mask(i)).collect(),
            om,
            maxtb: inst.maxtb(),
            busy: (0..n).map(|i| inst.total_busy(i)).collect(),
        }
    }

    fn branching_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by_key(|&t| (std::cmp::Reverse(self.busy[t]), t));
        order
    }
}

/// Shared node and time budget across the probes of one solve.
struct Budget {
    node_limit: Option<u64>,
    deadline: Option<Instant>,
    nodes: u64,
    exhausted: bool,
}

impl Budget {
    fn new(limits: &SolverLimits) -> Self {
        Budget {
            node_limit: limits.node_limit,
            deadline: limits.time_limit.map(|d| Instant::now() + d),
            nodes: 0,
            exhausted: false,
        }
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.node_limit.is_some_and(|l| self.nodes > l) {
            self.exhausted = true;
        }
        if self.nodes.is_multiple_of(1024) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.exhausted = true;
        }
        self.exhausted
    }
}

struct Search<'a> {
    c: &'a Compiled,
    budget: &'a mut Budget,
    buses: usize,
    order: Vec<usize>,
    load: Vec<u64>,
    count: Vec<usize>,
    members: Vec<u32>,
    ov: Vec<u64>,
    /// `[bus * n + target]`: overlap `target` would add to `bus`.
    pressure: Vec<u64>,
    assign: Vec<usize>,
    used: usize,
    track_ov: bool,
    /// Inclusive cap on the objective of any accepted solution.
    bound: u64,
    stop_at_first: bool,
    best: Option<(Vec<usize>, u64)>,
    aborted: bool,
}

impl<'a> Search<'a> {
    fn new(c: &'a Compiled, budget: &'a mut Budget, buses: usize, order: Vec<usize>) -> Self {
        Search {
            c,
            budget,
            buses,
            order,
            load: vec![0; buses * c.windows],
            count: vec![0; buses],
            members: vec![0; buses],
            ov: vec![0; buses],
            pressure: vec![0; buses * c.n],
            assign: vec![usize::MAX; c.n],
            used: 0,
            track_ov: false,
            bound: u64::MAX,
            stop_at_first: true,
            best: None,
            aborted: false,
        }
    }

    fn fits(&self, t: usize, k: usize) -> bool {
        let c = self.c;
        if self.count[k] >= c.maxtb || self.members[k] & c.conflict[t] != 0 {
            return false;
        }
        if self.track_ov && self.ov[k] + self.pressure[k * c.n + t] > self.bound {
            return false;
        }
        let w = c.windows;
        let load = &self.load[k * w..(k + 1) * w];
        let demand = &c.comm[t * w..(t + 1) * w];
        load.iter().zip(demand).all(|(l, d)| l + d <= c.ws)
    }

    fn place(&mut self, t: usize, k: usize) {
        let c = self.c;
        let w = c.windows;
        for r in 0..w {
            self.load[k * w + r] += c.comm[t * w + r];
        }
        self.count[k] += 1;
        self.members[k] |= 1 << t;
        self.ov[k] += self.pressure[k * c.n + t];
        for u in 0..c.n {
            self.pressure[k * c.n + u] += c.om[u * c.n + t];
        }
        self.assign[t] = k;
    }

    fn unplace(&mut self, t: usize, k: usize) {
        let c = self.c;
        let w = c.windows;
        for u in 0..c.n {
            self.pressure[k * c.n + u] -= c.om[u * c.n + t];
        }
        self.ov[k] -= self.pressure[k * c.n + t];
        self.members[k] &= !(1 << t);
        self.count[k] -= 1;
        for r in 0..w {
            self.load[k * w + r] -= c.comm[t * w + r];
        }
        self.assign[t] = usize::MAX;
    }

    /// With every bus open, each remaining target needs some bus it fits on.
    fn forward_check(&self, pos: usize) -> bool {
        if self.used < self.buses {
            return true;
        }
        self.order[pos..]
            .iter()
            .all(|&u| (0..self.buses).any(|k| self.fits(u, k)))
    }

    /// Returns true when the search should stop.
    fn dfs(&mut self, pos: usize) -> bool {
        if self.budget.tick() {
            self.aborted = true;
            return true;
        }
        if self.track_ov && self.ov[..self.used].iter().any(|&v| v > self.bound) {
            return false;
        }
        if pos == self.c.n {
            let value = self.ov.iter().copied().max().unwrap_or(0);
            self.best = Some((self.assign.clone(), value));
            if self.stop_at_first || value == 0 {
                return true;
            }
            self.bound = value - 1;
            return false;
        }
        let t = self.order[pos];
        let open = if self.used < self.buses {
            self.used + 1
        } else {
            self.buses
        };
        for k in 0..open {
            if !self.fits(t, k) {
                continue;
            }
            self.place(t, k);
            let opened = k == self.used;
            if opened {
                self.used += 1;
            }
            let stop = self.forward_check(pos + 1) && self.dfs(pos + 1);
            if opened {
                self.used -= 1;
            }
            self.unplace(t, k);
            if stop {
                return true;
            }
        }
        false
    }
}

fn check_bus_range(inst: &ProblemInstance, buses: usize) -> Result<()> {
    let n = inst.num_targets();
    if buses == 0 || buses > n {
        return Err(Error::InvalidParam(format!(
            "bus count {buses} outside 1..={n}"
        )));
    }
    Ok(())
}

/// First `(target, window)` whose demand alone exceeds a bus.
fn oversized_target(inst: &ProblemInstance) -> Option<(usize, usize)> {
    (0..inst.num_targets()).find_map(|i| {
        (0..inst.num_windows())
            .find(|&m| inst.comm(i, m) > inst.window_size())
            .map(|m| (i, m))
    })
}

fn feasibility(
    inst: &ProblemInstance,
    compiled: &Compiled,
    buses: usize,
    budget: &mut Budget,
) -> (Feasibility, SearchStats) {
    let started = Instant::now();
    let before = budget.nodes;
    if oversized_target(inst).is_some() {
        return (Feasibility::Infeasible, SearchStats { complete: true, ..Default::default() });
    }
    let mut s = Search::new(compiled, budget, buses, compiled.branching_order());
    s.dfs(0);
    let outcome = match (s.best.take(), s.aborted) {
        (Some((assign, _)), _) => {
            Feasibility::Feasible(CrossbarConfig { num_buses: buses, binding: assign }.canonical())
        }
        (None, true) => Feasibility::Unknown,
        (None, false) => Feasibility::Infeasible,
    };
    let aborted = s.aborted && !matches!(outcome, Feasibility::Feasible(_));
    let stats = SearchStats {
        nodes: budget.nodes - before,
        elapsed_ms: started.elapsed().as_millis(),
        complete: !aborted,
    };
    (outcome, stats)
}

/// Decides whether `buses` buses admit a valid binding, within `limits`.
pub fn check_feasible_with(
    inst: &ProblemInstance,
    buses: usize,
    limits: &SolverLimits,
) -> Result<(Feasibility, SearchStats)> {
    check_bus_range(inst, buses)?;
    let compiled = Compiled::new(inst);
    let mut budget = Budget::new(limits);
    Ok(feasibility(inst, &compiled, buses, &mut budget))
}

/// Exact feasibility test; returns a canonical witness when one exists.
pub fn check_feasible(inst: &ProblemInstance, buses: usize) -> Result<Option<CrossbarConfig>> {
    match check_feasible_with(inst, buses, &SolverLimits::unlimited())?.0 {
        Feasibility::Feasible(w) => Ok(Some(w)),
        _ => Ok(None),
    }
}

fn min_config_inner(
    inst: &ProblemInstance,
    compiled: &Compiled,
    budget: &mut Budget,
) -> Result<MinConfig> {
    if let Some((target, window)) = oversized_target(inst) {
        return Err(Error::BandwidthInfeasible { target, window });
    }
    let n = inst.num_targets();
    let mut lo = inst.bus_lower_bound();
    let mut hi = n;
    let mut proven = lo;
    // One target per bus always works once no target overflows a window alone.
    let mut witness = CrossbarConfig::full_crossbar(n);
    let mut probes = Vec::new();
    let mut stats = SearchStats { complete: true, ..Default::default() };
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let (outcome, s) = feasibility(inst, compiled, mid, budget);
        stats.absorb(s);
        match outcome {
            Feasibility::Feasible(w) => {
                probes.push(Probe { buses: mid, feasible: Some(true) });
                witness = w;
                hi = mid;
            }
            Feasibility::Infeasible => {
                probes.push(Probe { buses: mid, feasible: Some(false) });
                proven = proven.max(mid + 1);
                lo = mid + 1;
            }
            Feasibility::Unknown => {
                probes.push(Probe { buses: mid, feasible: None });
                lo = mid + 1;
            }
        }
    }
    Ok(MinConfig {
        best_buses: hi,
        lower_bound: proven.min(hi),
        witness,
        probes,
        stats,
    })
}

/// Smallest bus count admitting a valid binding, found by binary search
/// between [`ProblemInstance::bus_lower_bound`] and the target count.
pub fn min_config_with(inst: &ProblemInstance, limits: &SolverLimits) -> Result<MinConfig> {
    let compiled = Compiled::new(inst);
    let mut budget = Budget::new(limits);
    min_config_inner(inst, &compiled, &mut budget)
}

pub fn min_config(inst: &ProblemInstance) -> Result<MinConfig> {
    min_config_with(inst, &SolverLimits::unlimited())
}

fn objective(c: &Compiled, assign: &[usize], buses: usize) -> u64 {
    let mut ov = vec![0u64; buses];
    for i in 0..c.n {
        for j in i + 1..c.n {
            if assign[i] == assign[j] {
                ov[assign[i]] += c.om[i * c.n + j];
            }
        }
    }
    ov.into_iter().max().unwrap_or(0)
}

fn binding_inner(
    inst: &ProblemInstance,
    compiled: &Compiled,
    buses: usize,
    incumbent: Option<&CrossbarConfig>,
    budget: &mut Budget,
) -> Result<SolveReport> {
    check_bus_range(inst, buses)?;
    if oversized_target(inst).is_some() {
        return Err(Error::Infeasible(buses));
    }
    let started = Instant::now();
    let before = budget.nodes;

    // Phase 1: optimal objective value, branching in first-fail order.
    let mut s = Search::new(compiled, budget, buses, compiled.branching_order());
    s.track_ov = true;
    s.stop_at_first = false;
    if let Some(w) = incumbent.filter(|w| w.num_buses == buses) {
        let value = objective(compiled, &w.binding, buses);
        s.best = Some((w.binding.clone(), value));
        s.bound = value.saturating_sub(1);
    }
    let done_early = s.best.as_ref().is_some_and(|(_, v)| *v == 0);
    if !done_early {
        s.dfs(0);
    }
    let aborted = s.aborted;
    let best = s.best.take();
    let (assign, value) = match best {
        Some(b) => b,
        None if aborted => return Err(Error::LimitReached),
        None => return Err(Error::Infeasible(buses)),
    };

    // Phase 2: lexicographically smallest canonical binding with that value.
    // Targets in index order with buses tried lowest first enumerate canonical
    // bindings in lexicographic order, so the first hit is the answer.
    let mut binding = CrossbarConfig { num_buses: buses, binding: assign }.canonical();
    if !aborted {
        let mut s = Search::new(compiled, budget, buses, (0..compiled.n).collect());
        s.track_ov = true;
        s.bound = value;
        s.dfs(0);
        if let (Some((a, _)), false) = (s.best.take(), s.aborted) {
            binding = CrossbarConfig { num_buses: buses, binding: a };
        }
    }

    let maxov = bus_overlaps(inst.om(), &binding).into_iter().max().unwrap_or(0);
    debug_assert_eq!(maxov, value);
    Ok(SolveReport {
        config: binding,
        maxov,
        optimal: !aborted,
        feasibility_probes: Vec::new(),
        stats: SearchStats {
            nodes: budget.nodes - before,
            elapsed_ms: started.elapsed().as_millis(),
            complete: !aborted,
        },
    })
}

/// Binding on `buses` buses minimizing the largest per-bus overlap, within
/// `limits`. Ties go to the lexicographically smallest canonical binding.
pub fn optimal_binding_with(
    inst: &ProblemInstance,
    buses: usize,
    limits: &SolverLimits,
) -> Result<SolveReport> {
    let compiled = Compiled::new(inst);
    let mut budget = Budget::new(limits);
    binding_inner(inst, &compiled, buses, None, &mut budget)
}

pub fn optimal_binding(inst: &ProblemInstance, buses: usize) -> Result<SolveReport> {
    optimal_binding_with(inst, buses, &SolverLimits::unlimited())
}

/// Sizing followed by binding on the minimum bus count, sharing one budget.
pub fn solve(inst: &ProblemInstance, limits: &SolverLimits) -> Result<(MinConfig, SolveReport)> {
    let compiled = Compiled::new(inst);
    let mut budget = Budget::new(limits);
    let sizing = min_config_inner(inst, &compiled, &mut budget)?;
    let mut report = binding_inner(
        inst,
        &compiled,
        sizing.best_buses,
        Some(&sizing.witness),
        &mut budget,
    )?;
    report.feasibility_probes = sizing.probes.clone();
    let mut stats = sizing.stats;
    stats.absorb(report.stats);
    report.stats = stats;
    report.optimal &= sizing.is_optimal();
    Ok((sizing, report))
}
