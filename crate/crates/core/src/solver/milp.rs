//! Mixed-integer model export in CPLEX LP text format.
//!
//! Variables: `x_i_k` (target i on bus k), `sb_i_j_k` (i and j share bus k),
//! `s_i_j` (i and j share any bus), all binary, for `i < j`; plus a continuous
//! `maxov` when the binding objective is requested. The product
//! `sb = x_i_k * x_j_k` is linearized as
//! `x_i_k + x_j_k - sb <= 1` and `0.5 x_i_k + 0.5 x_j_k - sb >= 0`.
//! Indices in names are 1-based.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub name: String,
    pub terms: Vec<(f64, String)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LinearRow {
    fn new(name: String, terms: Vec<(f64, String)>, sense: RowSense, rhs: f64) -> Self {
        LinearRow {
            name,
            terms,
            sense,
            rhs,
        }
    }

    /// Evaluates the row under an assignment; missing variables count as zero.
    pub fn is_satisfied(&self, values: &HashMap<String, f64>) -> bool {
        let lhs: f64 = self
            .terms
            .iter()
            .map(|(c, v)| c * values.get(v).copied().unwrap_or(0.0))
            .sum();
        const EPS: f64 = 1e-9;
        match self.sense {
            RowSense::Le => lhs <= self.rhs + EPS,
            RowSense::Ge => lhs >= self.rhs - EPS,
            RowSense::Eq => (lhs - self.rhs).abs() <= EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    /// Minimized objective; `None` for a pure feasibility model.
    pub objective: Option<Vec<(f64, String)>>,
    pub rows: Vec<LinearRow>,
    pub binaries: Vec<String>,
    pub continuous: Vec<String>,
}

fn x(i: usize, k: usize) -> String {
    format!("x_{}_{}", i + 1, k + 1)
}

fn sb(i: usize, j: usize, k: usize) -> String {
    format!("sb_{}_{}_{}", i + 1, j + 1, k + 1)
}

fn s(i: usize, j: usize) -> String {
    format!("s_{}_{}", i + 1, j + 1)
}

fn number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn render_terms(out: &mut String, terms: &[(f64, String)]) {
    for (idx, (coef, var)) in terms.iter().enumerate() {
        let sign = if *coef < 0.0 { "-" } else { "+" };
        let mag = coef.abs();
        if idx == 0 {
            if *coef < 0.0 {
                out.push_str(" -");
            }
        } else {
            let _ = write!(out, " {sign}");
        }
        if mag == 1.0 {
            let _ = write!(out, " {var}");
        } else {
            let _ = write!(out, " {} {var}", number(mag));
        }
    }
}

impl MilpModel {
    pub fn row(&self, name: &str) -> Option<&LinearRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Renders the model in LP format.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ crossbar binding model\n");
        out.push_str("Minimize\n obj:");
        match &self.objective {
            Some(terms) if !terms.is_empty() => render_terms(&mut out, terms),
            // constant objective: feasibility only
            _ => {
                let _ = write!(out, " 0 {}", self.binaries.first().map_or("maxov", String::as_str));
            }
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.name);
            if row.terms.is_empty() {
                let _ = write!(out, " 0 {}", self.binaries[0]);
            }
            render_terms(&mut out, &row.terms);
            let _ = writeln!(out, " {} {}", row.sense.symbol(), number(row.rhs));
        }
        if !self.continuous.is_empty() {
            out.push_str("Bounds\n");
            for v in &self.continuous {
                let _ = writeln!(out, " {v} >= 0");
            }
        }
        out.push_str("Binaries\n");
        for chunk in self.binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
        out.push_str("End\n");
        out
    }
}

/// Builds the model for `buses` buses. With `with_objective` the model
/// minimizes `maxov`; otherwise it only tests feasibility.
pub fn export_milp(inst: &ProblemInstance, buses: usize, with_objective: bool) -> MilpModel {
    let n = inst.num_targets();
    let mut rows = Vec::new();
    let mut binaries = Vec::new();

    for i in 0..n {
        for k in 0..buses {
            binaries.push(x(i, k));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in 0..buses {
                binaries.push(sb(i, j, k));
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            binaries.push(s(i, j));
        }
    }

    // each target on exactly one bus
    for i in 0..n {
        let terms = (0..buses).map(|k| (1.0, x(i, k))).collect();
        rows.push(LinearRow::new(format!("one_{}", i + 1), terms, RowSense::Eq, 1.0));
    }
    // per-window bandwidth on every bus
    let ws = inst.window_size() as f64;
    for k in 0..buses {
        for m in 0..inst.num_windows() {
            let terms: Vec<(f64, String)> = (0..n)
                .filter(|&i| inst.comm(i, m) > 0)
                .map(|i| (inst.comm(i, m) as f64, x(i, k)))
                .collect();
            if !terms.is_empty() {
                rows.push(LinearRow::new(
                    format!("bw_{}_{}", k + 1, m + 1),
                    terms,
                    RowSense::Le,
                    ws,
                ));
            }
        }
    }
    // sharing linearization and aggregation
    for i in 0..n {
        for j in i + 1..n {
            for k in 0..buses {
                let tag = format!("{}_{}_{}", i + 1, j + 1, k + 1);
                rows.push(LinearRow::new(
                    format!("lin_lo_{tag}"),
                    vec![(1.0, x(i, k)), (1.0, x(j, k)), (-1.0, sb(i, j, k))],
                    RowSense::Le,
                    1.0,
                ));
                rows.push(LinearRow::new(
                    format!("lin_hi_{tag}"),
                    vec![(0.5, x(i, k)), (0.5, x(j, k)), (-1.0, sb(i, j, k))],
                    RowSense::Ge,
                    0.0,
                ));
            }
            let mut terms = vec![(1.0, s(i, j))];
            terms.extend((0..buses).map(|k| (-1.0, sb(i, j, k))));
            rows.push(LinearRow::new(
                format!("share_{}_{}", i + 1, j + 1),
                terms,
                RowSense::Eq,
                0.0,
            ));
        }
    }
    // conflicting pairs never share
    for (i, j) in inst.conflict().pairs() {
        rows.push(LinearRow::new(
            format!("conf_{}_{}", i + 1, j + 1),
            vec![(1.0, s(i, j))],
            RowSense::Eq,
            0.0,
        ));
    }
    // targets per bus
    for k in 0..buses {
        let terms = (0..n).map(|i| (1.0, x(i, k))).collect();
        rows.push(LinearRow::new(
            format!("card_{}", k + 1),
            terms,
            RowSense::Le,
            inst.maxtb() as f64,
        ));
    }

    let mut continuous = Vec::new();
    let objective = if with_objective {
        continuous.push("maxov".to_string());
        for k in 0..buses {
            let mut terms = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let w = inst.om().get(i, j);
                    if w > 0 {
                        terms.push((w as f64, sb(i, j, k)));
                    }
                }
            }
            terms.push((-1.0, "maxov".to_string()));
            rows.push(LinearRow::new(format!("ov_{}", k + 1), terms, RowSense::Le, 0.0));
        }
        Some(vec![(1.0, "maxov".to_string())])
    } else {
        None
    };

    MilpModel {
        objective,
        rows,
        binaries,
        continuous,
    }
}
