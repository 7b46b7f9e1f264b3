//! Brute-force oracles and random instance builders shared by the
//! integration tests.

#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbar::solver::ProblemInstance;
use xbar::trace::{Direction, Trace, Transaction};
use xbar::window::{ConflictMatrix, OverlapMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    rng.next_u64() % n
}

pub fn chance(rng: &mut ChaCha8Rng, percent: u64) -> bool {
    below(rng, 100) < percent
}

/// Random solver instance with up to `max_targets` targets and `max_windows`
/// windows. Every target fits a window on its own.
pub fn random_instance(rng: &mut ChaCha8Rng, max_targets: usize, max_windows: usize) -> ProblemInstance {
    let n = 1 + below(rng, max_targets as u64) as usize;
    let w = 1 + below(rng, max_windows as u64) as usize;
    let ws = 20 + below(rng, 81);
    let density = below(rng, 80);
    let comm: Vec<Vec<u64>> = (0..n)
        .map(|_| {
            (0..w)
                .map(|_| if chance(rng, 25) { 0 } else { below(rng, ws * 3 / 4 + 1) })
                .collect()
        })
        .collect();
    let mut om = vec![vec![0u64; n]; n];
    let mut pairs = Vec::new();
    let conflict_pct = below(rng, 35);
    for i in 0..n {
        for j in i + 1..n {
            if chance(rng, density + 20) {
                let v = below(rng, 60);
                om[i][j] = v;
                om[j][i] = v;
            }
            if chance(rng, conflict_pct) {
                pairs.push((i, j));
            }
        }
    }
    let maxtb = 1 + below(rng, n as u64) as usize;
    ProblemInstance::new(
        ws,
        comm,
        OverlapMatrix::from_rows(&om).unwrap(),
        ConflictMatrix::from_pairs(n, &pairs).unwrap(),
        maxtb,
    )
    .unwrap()
}

/// Independent constraint check: one bus per target, bandwidth in every
/// window, no conflicting pair together, at most `maxtb` per bus.
pub fn binding_is_valid(inst: &ProblemInstance, binding: &[usize]) -> bool {
    let n = inst.num_targets();
    if binding.len() != n {
        return false;
    }
    let buses = binding.iter().max().map_or(0, |b| b + 1);
    for k in 0..buses {
        let members: Vec<usize> = (0..n).filter(|&t| binding[t] == k).collect();
        if members.len() > inst.maxtb() {
            return false;
        }
        for m in 0..inst.num_windows() {
            let load: u64 = members.iter().map(|&t| inst.comm(t, m)).sum();
            if load > inst.window_size() {
                return false;
            }
        }
        for a in &members {
            for b in &members {
                if a < b && inst.conflict().get(*a, *b) {
                    return false;
                }
            }
        }
    }
    true
}

pub fn objective(inst: &ProblemInstance, binding: &[usize]) -> u64 {
    let buses = binding.iter().max().map_or(0, |b| b + 1);
    let mut per_bus = vec![0u64; buses];
    for i in 0..binding.len() {
        for j in i + 1..binding.len() {
            if binding[i] == binding[j] {
                per_bus[binding[i]] += inst.om().get(i, j);
            }
        }
    }
    per_bus.into_iter().max().unwrap_or(0)
}

/// Calls `visit` on every canonical binding (restricted growth string) in
/// lexicographic order, with the number of buses it uses.
pub fn for_each_canonical(n: usize, mut visit: impl FnMut(&[usize], usize)) {
    fn rec(pos: usize, used: usize, cur: &mut Vec<usize>, n: usize, visit: &mut dyn FnMut(&[usize], usize)) {
        if pos == n {
            visit(cur, used);
            return;
        }
        for k in 0..=used {
            cur.push(k);
            rec(pos + 1, used.max(k + 1), cur, n, visit);
            cur.pop();
        }
    }
    rec(0, 0, &mut Vec::with_capacity(n), n, &mut visit);
}

pub struct Enumeration {
    /// Fewest buses of any valid binding.
    pub min_buses: usize,
    /// Index `b`: best objective on at most `b` buses and the
    /// lexicographically first canonical binding reaching it.
    pub best: Vec<Option<(u64, Vec<usize>)>>,
}

impl Enumeration {
    /// Feasibility of exactly `b` buses (empty buses allowed).
    pub fn feasible(&self, b: usize) -> bool {
        self.best.get(b).is_some_and(Option::is_some)
    }
}

pub fn enumerate(inst: &ProblemInstance) -> Enumeration {
    let n = inst.num_targets();
    let mut per_used: Vec<Option<(u64, Vec<usize>)>> = vec![None; n + 1];
    for_each_canonical(n, |binding, used| {
        if !binding_is_valid(inst, binding) {
            return;
        }
        let v = objective(inst, binding);
        let slot = &mut per_used[used];
        if slot.as_ref().is_none_or(|(best, _)| v < *best) {
            *slot = Some((v, binding.to_vec()));
        }
    });
    let min_buses = (1..=n).find(|&b| per_used[b].is_some()).unwrap_or(usize::MAX);
    let mut best: Vec<Option<(u64, Vec<usize>)>> = vec![None; n + 1];
    for b in 1..=n {
        let mut acc: Option<(u64, Vec<usize>)> = None;
        for cand in per_used[1..=b].iter().flatten() {
            let better = match &acc {
                None => true,
                Some((v, bind)) => cand.0 < *v || (cand.0 == *v && cand.1 < *bind),
            };
            if better {
                acc = Some(cand.clone());
            }
        }
        best[b] = acc;
    }
    Enumeration { min_buses, best }
}

/// Per-window tables from a per-cycle boolean occupancy sweep.
pub struct NaiveProfile {
    pub num_windows: usize,
    pub comm: Vec<Vec<u64>>,
    pub wo: Vec<Vec<Vec<u64>>>,
    pub crit_wo: Vec<Vec<Vec<u64>>>,
}

pub fn naive_profile(trace: &Trace, ws: u64) -> NaiveProfile {
    let n = trace.num_targets;
    let h = trace.horizon as usize;
    let mut busy = vec![vec![false; h]; n];
    let mut crit = vec![vec![false; h]; n];
    for t in &trace.transactions {
        for c in t.start_cycle..t.end_cycle() {
            busy[t.target][c as usize] = true;
            if t.critical {
                crit[t.target][c as usize] = true;
            }
        }
    }
    let w = trace.horizon.div_ceil(ws) as usize;
    let mut comm = vec![vec![0; w]; n];
    let mut wo = vec![vec![vec![0; w]; n]; n];
    let mut crit_wo = vec![vec![vec![0; w]; n]; n];
    for c in 0..h {
        let m = c / ws as usize;
        for i in 0..n {
            if busy[i][c] {
                comm[i][m] += 1;
            }
            for j in 0..n {
                if busy[i][c] && busy[j][c] {
                    wo[i][j][m] += 1;
                }
                if crit[i][c] && crit[j][c] {
                    crit_wo[i][j][m] += 1;
                }
            }
        }
    }
    NaiveProfile {
        num_windows: w,
        comm,
        wo,
        crit_wo,
    }
}

/// Random trace with up to `max_targets` targets. Same-target transactions
/// may overlap.
pub fn random_trace(rng: &mut ChaCha8Rng, max_targets: usize, max_horizon: u64, max_txns: usize) -> Trace {
    let ni = 1 + below(rng, 4) as usize;
    let nt = 1 + below(rng, max_targets as u64) as usize;
    let count = below(rng, max_txns as u64 + 1) as usize;
    let max_dur = 1 + below(rng, 400);
    let txns = (0..count)
        .map(|_| {
            let duration = 1 + below(rng, max_dur);
            Transaction {
                start_cycle: below(rng, max_horizon - duration),
                duration,
                initiator: below(rng, ni as u64) as usize,
                target: below(rng, nt as u64) as usize,
                critical: chance(rng, 15),
                direction: Direction::Request,
            }
        })
        .collect();
    let trace = Trace::new(ni, nt, Direction::Request, txns).unwrap();
    let horizon = trace.horizon.max(1) + below(rng, 50);
    trace.with_horizon(horizon.min(max_horizon)).unwrap()
}

/// Cycle-stepping bus model: every cycle, each idle bus grants its oldest
/// pending request, ties by `(target, initiator)`. Returns latencies in trace
/// order.
pub fn stepped_latencies(trace: &Trace, binding: &[usize], buses: usize) -> Vec<u64> {
    let txns = &trace.transactions;
    let mut done = vec![None; txns.len()];
    let mut busy_until = vec![0u64; buses];
    let mut served = vec![false; txns.len()];
    let mut remaining = txns.len();
    let mut cycle = 0u64;
    while remaining > 0 {
        for (k, until) in busy_until.iter_mut().enumerate() {
            if *until > cycle {
                continue;
            }
            let pick = (0..txns.len())
                .filter(|&x| !served[x] && binding[txns[x].target] == k && txns[x].start_cycle <= cycle)
                .min_by_key(|&x| (txns[x].start_cycle, txns[x].target, txns[x].initiator, x));
            if let Some(x) = pick {
                served[x] = true;
                remaining -= 1;
                *until = cycle + txns[x].duration;
                done[x] = Some(*until);
            }
        }
        cycle += 1;
    }
    txns.iter()
        .zip(done)
        .map(|(t, d)| d.unwrap() - t.start_cycle)
        .collect()
}
