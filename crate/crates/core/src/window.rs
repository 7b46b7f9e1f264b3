//! Window-based traffic analysis and conflict pre-processing.
//!
//! The horizon is tiled by windows `[m * ws, (m + 1) * ws)`. For each window
//! we record how many cycles each target is occupied (`comm`) and, for each
//! target pair, how many cycles both are occupied at once (`wo`). `crit_wo`
//! counts only cycles where both are occupied by critical transactions.
//! Occupancy is boolean per cycle: concurrent transactions to one target count once.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trace::Trace;

/// Largest admissible overlap threshold, as a fraction of the window size.
/// Above half a window, two overlapping targets already break the per-window
/// bandwidth bound on any shared bus.
pub const MAX_OVERLAP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisParams {
    pub window_size: u64,
    /// Fraction of the window size in `(0, 0.5]`.
    pub overlap_threshold: f64,
    /// Targets per bus cap; `None` means unconstrained.
    pub max_targets_per_bus: Option<usize>,
}

impl AnalysisParams {
    pub fn new(window_size: u64, overlap_threshold: f64) -> Self {
        AnalysisParams {
            window_size,
            overlap_threshold,
            max_targets_per_bus: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 {
            return Err(Error::InvalidParam("window size must be at least 1 cycle".into()));
        }
        validate_threshold(self.overlap_threshold)?;
        if self.max_targets_per_bus == Some(0) {
            return Err(Error::InvalidParam("max targets per bus must be at least 1".into()));
        }
        Ok(())
    }

    /// The cap resolved against a concrete target count.
    pub fn maxtb(&self, num_targets: usize) -> usize {
        self.max_targets_per_bus.unwrap_or(num_targets).max(1)
    }
}

pub fn validate_threshold(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= MAX_OVERLAP_THRESHOLD {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!(
            "overlap threshold {theta} outside (0, 0.5]: overlap above 50% of the window \
             already violates the window bandwidth constraint"
        )))
    }
}

/// Index of the unordered pair `i < j` in a row-major upper triangle.
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Per-window busy and overlap counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowProfile {
    window_size: u64,
    num_targets: usize,
    num_windows: usize,
    /// `[target][window]`, flattened.
    comm: Vec<u64>,
    /// Critical-only occupancy, `[target][window]`.
    crit_comm: Vec<u64>,
    /// `[pair][window]` for pairs `i < j`.
    wo: Vec<u64>,
    crit_wo: Vec<u64>,
}

impl WindowProfile {
    pub fn window_size(&self) -> u64 {
        self.window_size
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    pub fn num_windows(&self) -> usize {
        self.num_windows
    }

    pub fn comm(&self, target: usize, window: usize) -> u64 {
        self.comm[target * self.num_windows + window]
    }

    /// The busy-cycle series of one target.
    pub fn comm_row(&self, target: usize) -> &[u64] {
        &self.comm[target * self.num_windows..(target + 1) * self.num_windows]
    }

    pub fn wo(&self, i: usize, j: usize, window: usize) -> u64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.comm(i, window),
            std::cmp::Ordering::Less => {
                self.wo[pair_index(self.num_targets, i, j) * self.num_windows + window]
            }
            std::cmp::Ordering::Greater => self.wo(j, i, window),
        }
    }

    pub fn crit_wo(&self, i: usize, j: usize, window: usize) -> u64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.crit_comm[i * self.num_windows + window],
            std::cmp::Ordering::Less => {
                self.crit_wo[pair_index(self.num_targets, i, j) * self.num_windows + window]
            }
            std::cmp::Ordering::Greater => self.crit_wo(j, i, window),
        }
    }

    /// Builds a profile from explicit `[i][m]` and `[i][j][m]` tables, checking
    /// the structural invariants (bounds, symmetry, diagonal).
    pub fn from_tables(
        window_size: u64,
        comm: &[Vec<u64>],
        wo: &[Vec<Vec<u64>>],
        crit_wo: &[Vec<Vec<u64>>],
    ) -> Result<Self> {
        if window_size == 0 {
            return Err(Error::InvalidParam("window size must be at least 1 cycle".into()));
        }
        let n = comm.len();
        let w = comm.first().map_or(0, Vec::len);
        let dims_ok = comm.iter().all(|r| r.len() == w)
            && [wo, crit_wo]
                .iter()
                .all(|t| t.len() == n && t.iter().all(|r| r.len() == n && r.iter().all(|c| c.len() == w)));
        if !dims_ok {
            return Err(Error::Dimension("ragged profile tables".into()));
        }
        let mut p = WindowProfile {
            window_size,
            num_targets: n,
            num_windows: w,
            comm: comm.concat(),
            crit_comm: (0..n).flat_map(|i| crit_wo[i][i].clone()).collect(),
            wo: vec![0; n * n.saturating_sub(1) / 2 * w],
            crit_wo: vec![0; n * n.saturating_sub(1) / 2 * w],
        };
        for i in 0..n {
            for m in 0..w {
                if comm[i][m] > window_size {
                    return Err(Error::Dimension(format!("comm[{i}][{m}] exceeds the window")));
                }
                if wo[i][i][m] != comm[i][m] {
                    return Err(Error::Dimension(format!("wo[{i}][{i}][{m}] differs from comm")));
                }
            }
            for j in i + 1..n {
                let base = pair_index(n, i, j) * w;
                for m in 0..w {
                    let (a, b) = (wo[i][j][m], crit_wo[i][j][m]);
                    if a != wo[j][i][m] || b != crit_wo[j][i][m] {
                        return Err(Error::Dimension(format!("overlap ({i},{j}) not symmetric")));
                    }
                    if a > comm[i][m].min(comm[j][m]) || b > a {
                        return Err(Error::Dimension(format!("overlap ({i},{j},{m}) out of bounds")));
                    }
                    p.wo[base + m] = a;
                    p.crit_wo[base + m] = b;
                }
            }
        }
        Ok(p)
    }
}

/// Sorted, disjoint, non-adjacent busy intervals of one target.
fn merged_intervals<'a>(spans: impl Iterator<Item = (u64, u64)> + 'a) -> Vec<(u64, u64)> {
    let mut spans: Vec<(u64, u64)> = spans.collect();
    spans.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match out.last_mut() {
            Some((_, end)) if s <= *end => *end = (*end).max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn intersect(a: &[(u64, u64)], b: &[(u64, u64)], mut sink: impl FnMut(u64, u64)) {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        let s = a[x].0.max(b[y].0);
        let e = a[x].1.min(b[y].1);
        if s < e {
            sink(s, e);
        }
        if a[x].1 < b[y].1 {
            x += 1;
        } else {
            y += 1;
        }
    }
}

/// Adds `[s, e)` into a per-window accumulator row.
fn spread(row: &mut [u64], ws: u64, s: u64, e: u64) {
    let mut t = s;
    while t < e {
        let m = (t / ws) as usize;
        let stop = e.min((m as u64 + 1) * ws);
        row[m] += stop - t;
        t = stop;
    }
}

/// Profiles a trace with windows of `window_size` cycles.
pub fn profile(trace: &Trace, window_size: u64) -> Result<WindowProfile> {
    if window_size == 0 {
        return Err(Error::InvalidParam("window size must be at least 1 cycle".into()));
    }
    let n = trace.num_targets;
    let w = trace.horizon.div_ceil(window_size) as usize;
    let busy: Vec<Vec<(u64, u64)>> = (0..n)
        .map(|i| {
            merged_intervals(
                trace
                    .transactions
                    .iter()
                    .filter(|t| t.target == i)
                    .map(|t| (t.start_cycle, t.end_cycle())),
            )
        })
        .collect();
    let crit: Vec<Vec<(u64, u64)>> = (0..n)
        .map(|i| {
            merged_intervals(
                trace
                    .transactions
                    .iter()
                    .filter(|t| t.target == i && t.critical)
                    .map(|t| (t.start_cycle, t.end_cycle())),
            )
        })
        .collect();

    let pairs = n * n.saturating_sub(1) / 2;
    let mut p = WindowProfile {
        window_size,
        num_targets: n,
        num_windows: w,
        comm: vec![0; n * w],
        crit_comm: vec![0; n * w],
        wo: vec![0; pairs * w],
        crit_wo: vec![0; pairs * w],
    };
    for i in 0..n {
        let row = &mut p.comm[i * w..(i + 1) * w];
        for &(s, e) in &busy[i] {
            spread(row, window_size, s, e);
        }
        let row = &mut p.crit_comm[i * w..(i + 1) * w];
        for &(s, e) in &crit[i] {
            spread(row, window_size, s, e);
        }
        for j in i + 1..n {
            let base = pair_index(n, i, j) * w;
            let row = &mut p.wo[base..base + w];
            intersect(&busy[i], &busy[j], |s, e| spread(row, window_size, s, e));
            let row = &mut p.crit_wo[base..base + w];
            intersect(&crit[i], &crit[j], |s, e| spread(row, window_size, s, e));
        }
    }
    Ok(p)
}

/// Symmetric whole-horizon overlap totals; the diagonal is total occupancy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapMatrix {
    n: usize,
    om: Vec<u64>,
}

impl OverlapMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("overlap matrix must be square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Dimension(format!("om[{i}][{j}] not symmetric")));
                }
            }
        }
        Ok(OverlapMatrix {
            n,
            om: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.om[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.om.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }
}

/// Sums per-window overlaps over all windows.
pub fn aggregate_overlap(profile: &WindowProfile) -> OverlapMatrix {
    let n = profile.num_targets;
    let mut om = vec![0u64; n * n];
    for i in 0..n {
        for j in i..n {
            let total: u64 = (0..profile.num_windows).map(|m| profile.wo(i, j, m)).sum();
            om[i * n + j] = total;
            om[j * n + i] = total;
        }
    }
    OverlapMatrix { n, om }
}

/// Pairs of targets that must sit on different buses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConflictMatrix {
    n: usize,
    c: Vec<bool>,
}

impl ConflictMatrix {
    pub fn empty(n: usize) -> Self {
        ConflictMatrix {
            n,
            c: vec![false; n * n],
        }
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut m = ConflictMatrix::empty(n);
        for &(i, j) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::Dimension(format!("invalid conflict pair ({i},{j})")));
            }
            m.set(i, j);
        }
        Ok(m)
    }

    fn set(&mut self, i: usize, j: usize) {
        self.c[i * self.n + j] = true;
        self.c[j * self.n + i] = true;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.c[i * self.n + j]
    }

    /// Number of conflicting unordered pairs.
    pub fn pair_count(&self) -> usize {
        (0..self.n)
            .map(|i| (i + 1..self.n).filter(|&j| self.get(i, j)).count())
            .sum()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j))
            .collect()
    }

    /// Neighbours of `i` as a bitmask (requires `n <= 32`).
    pub fn mask(&self, i: usize) -> u32 {
        (0..self.n)
            .filter(|&j| self.get(i, j))
            .fold(0u32, |acc, j| acc | (1 << j))
    }
}

/// Integer cycle threshold for an overlap fraction, rounded down.
pub fn threshold_cycles(window_size: u64, theta: f64) -> u64 {
    (theta * window_size as f64).floor() as u64
}

/// Marks pairs whose window overlap exceeds the threshold in some window, or
/// whose critical streams overlap at all.
pub fn preprocess(profile: &WindowProfile, params: &AnalysisParams) -> Result<ConflictMatrix> {
    validate_threshold(params.overlap_threshold)?;
    let limit = threshold_cycles(profile.window_size, params.overlap_threshold);
    let n = profile.num_targets;
    let mut c = ConflictMatrix::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let hit = (0..profile.num_windows)
                .any(|m| profile.wo(i, j, m) > limit || profile.crit_wo(i, j, m) > 0);
            if hit {
                c.set(i, j);
            }
        }
    }
    Ok(c)
}
